#pragma once
// Line-oriented parser for the mini-IR text format.

#include "scratchshare/ir.hpp"

namespace scratchshare {

struct ParseError : Error {
  int line = 0;  // 1-based; 0 for whole-kernel errors
  int col = 0;
  ParseError(int line, int col, const std::string& what);
};

// Parses kernel text and rejects anything that would fail validate_cfg, so
// every KernelCFG returned here satisfies the CFG invariants.
KernelCFG parse_kernel(const std::string& text);
KernelCFG parse_kernel_file(const std::string& path);

}  // namespace scratchshare
