#pragma once
// CFG preprocessing ahead of the placement analyses: unique entry/exit
// blocks and no critical edges.

#include "scratchshare/ir.hpp"

namespace scratchshare {

// Adds $entry/$exit trampolines where needed; identity otherwise.
KernelCFG ensure_unique_entry_exit(const KernelCFG& cfg);

// Splits every edge whose source has >1 successor and destination has >1
// predecessor by inserting a $split<k> block holding one goto.
KernelCFG split_critical_edges(const KernelCFG& cfg);

KernelCFG normalize(const KernelCFG& cfg);  // both passes

// Number of edges matching the critical predicate (test/report helper).
int count_critical_edges(const KernelCFG& cfg);

}  // namespace scratchshare
