#include "scratchshare/parse.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace scratchshare {

ParseError::ParseError(int line, int col, const std::string& what)
    : Error("line " + std::to_string(line) + ":" + std::to_string(col) + ": " + what),
      line(line),
      col(col) {}

namespace {

struct Cursor {
  const std::string& text;
  size_t pos = 0;
  int line;

  explicit Cursor(const std::string& t, int line) : text(t), line(line) {}

  int col() const { return static_cast<int>(pos) + 1; }
  bool done() const { return pos >= text.size(); }
  char peek() const { return done() ? '\0' : text[pos]; }

  void skip_ws() {
    while (!done() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, col(), msg); }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos;
  }

  bool try_consume(char c) {
    skip_ws();
    if (peek() != c) return false;
    ++pos;
    return true;
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }
  static bool ident_char(char c) { return ident_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '.'; }

  std::string ident() {
    skip_ws();
    if (!ident_start(peek())) fail("expected identifier");
    size_t start = pos;
    while (!done() && ident_char(text[pos])) ++pos;
    return text.substr(start, pos - start);
  }

  uint64_t number() {
    skip_ws();
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected number");
    uint64_t v = 0;
    while (!done() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      v = v * 10 + static_cast<uint64_t>(text[pos] - '0');
      if (v > (1ull << 40)) fail("number too large");
      ++pos;
    }
    return v;
  }

  int reg() {
    skip_ws();
    if (peek() != 'r') fail("expected register");
    ++pos;
    uint64_t n = number();
    if (n > 255) fail("register index out of range (r0..r255)");
    return static_cast<int>(n);
  }

  void end() {
    skip_ws();
    if (!done()) fail("trailing characters");
  }
};

Instruction parse_instr(Cursor& c, const std::string& opname) {
  Instruction ins;
  if (opname == "add") {
    ins.op = Opcode::Add;
    ins.dest = c.reg();
    c.expect(',');
    ins.src0 = c.reg();
    c.expect(',');
    ins.src1 = c.reg();
  } else if (opname == "mov") {
    ins.op = Opcode::Mov;
    ins.dest = c.reg();
    c.expect(',');
    ins.src0 = c.reg();
  } else if (opname == "ld.global") {
    ins.op = Opcode::LdGlobal;
    ins.dest = c.reg();
    c.expect(',');
    c.expect('[');
    ins.src0 = c.reg();
    c.expect(']');
  } else if (opname == "st.global") {
    ins.op = Opcode::StGlobal;
    c.expect('[');
    ins.src0 = c.reg();
    c.expect(']');
    c.expect(',');
    ins.src1 = c.reg();
  } else if (opname == "ld.shared") {
    ins.op = Opcode::LdShared;
    ins.dest = c.reg();
    c.expect(',');
    SharedOperand mem;
    mem.var = c.ident();
    c.expect('[');
    mem.offset = static_cast<uint32_t>(c.number());
    c.expect(']');
    ins.mem = mem;
  } else if (opname == "st.shared") {
    ins.op = Opcode::StShared;
    SharedOperand mem;
    mem.var = c.ident();
    c.expect('[');
    mem.offset = static_cast<uint32_t>(c.number());
    c.expect(']');
    ins.mem = mem;
    c.expect(',');
    ins.src0 = c.reg();
  } else if (opname == "bar.sync") {
    ins.op = Opcode::BarSync;
  } else if (opname == "bra") {
    ins.op = Opcode::Bra;
    ins.target0 = c.ident();
  } else if (opname == "bra.cond") {
    ins.op = Opcode::BraCond;
    ins.src0 = c.reg();
    c.expect(',');
    ins.target0 = c.ident();
    c.expect(',');
    ins.target1 = c.ident();
  } else if (opname == "relssp") {
    ins.op = Opcode::Relssp;
  } else if (opname == "exit") {
    ins.op = Opcode::Exit;
  } else {
    c.fail("unknown opcode '" + opname + "'");
  }
  c.end();
  return ins;
}

std::string strip_comment(const std::string& line) {
  size_t hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

}  // namespace

KernelCFG parse_kernel(const std::string& text) {
  KernelCFG cfg;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  bool saw_block = false;

  while (std::getline(in, raw)) {
    ++lineno;
    std::string body = strip_comment(raw);
    Cursor c(body, lineno);
    c.skip_ws();
    if (c.done()) continue;

    if (c.try_consume('.')) {
      std::string dir = c.ident();
      if (dir != "shared") c.fail("unknown directive '." + dir + "'");
      if (saw_block) c.fail(".shared declarations must precede the first block");
      ScratchpadVar v;
      v.id = c.ident();
      v.size_bytes = static_cast<uint32_t>(c.number());
      c.end();
      if (v.size_bytes == 0) c.fail("variable '" + v.id + "' has zero size");
      if (cfg.var_index(v.id) >= 0) c.fail("duplicate variable '" + v.id + "'");
      cfg.vars.push_back(std::move(v));
      continue;
    }

    std::string word = c.ident();
    if (c.try_consume(':')) {
      // block header, optionally annotated: `label: @loopdepth k`
      BasicBlock b;
      b.label = word;
      b.synthetic = !word.empty() && word[0] == '$';
      if (c.try_consume('@')) {
        std::string ann = c.ident();
        if (ann != "loopdepth") c.fail("unknown annotation '@" + ann + "'");
        b.loop_depth = static_cast<int>(c.number());
      }
      c.end();
      if (cfg.block_index(b.label) >= 0) c.fail("duplicate label '" + b.label + "'");
      cfg.blocks.push_back(std::move(b));
      saw_block = true;
      continue;
    }

    if (!saw_block) c.fail("instruction before the first block label");
    BasicBlock& b = cfg.blocks.back();
    if (b.terminator()) c.fail("instruction after block terminator");
    b.instrs.push_back(parse_instr(c, word));
  }

  if (cfg.blocks.empty()) throw ParseError(lineno, 1, "kernel has no blocks");

  // Wire successors: explicit branch targets, or fallthrough to the next block.
  for (size_t i = 0; i < cfg.blocks.size(); ++i) {
    BasicBlock& b = cfg.blocks[i];
    const Instruction* term = b.terminator();
    if (!term) {
      if (i + 1 == cfg.blocks.size())
        throw ParseError(lineno, 1, "last block '" + b.label + "' falls through to nothing");
      b.succs = {cfg.blocks[i + 1].label};
    } else if (term->op == Opcode::Bra) {
      b.succs = {term->target0};
    } else if (term->op == Opcode::BraCond) {
      b.succs = {term->target0, term->target1};
    }
    // Re-parsed transforms keep their accounting: relssp by opcode, and the
    // normalizer's branches live in $-blocks or jump to the $exit trampoline.
    for (auto& ins : b.instrs) {
      if (ins.op == Opcode::Relssp) ins.tag = InstrTag::Relssp;
      if (ins.op == Opcode::Bra &&
          (b.synthetic || (!ins.target0.empty() && ins.target0[0] == '$')))
        ins.tag = InstrTag::Goto;
    }
  }

  cfg.entry = cfg.blocks.front().label;
  int exit_count = 0;
  for (const auto& b : cfg.blocks) {
    const Instruction* term = b.terminator();
    if (term && term->op == Opcode::Exit) {
      cfg.exit = b.label;
      ++exit_count;
    }
  }
  if (exit_count != 1) cfg.exit.clear();

  auto diags = validate_cfg(cfg);
  if (!diags.empty()) {
    const Diagnostic& d = diags.front();
    std::string where = d.block.empty() ? "" : "block '" + d.block + "': ";
    throw ParseError(0, 0, where + d.message);
  }
  return cfg;
}

KernelCFG parse_kernel_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open kernel file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kernel(buf.str());
}

}  // namespace scratchshare
