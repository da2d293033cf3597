#pragma once

#include <malloc.h>

namespace imputeformer {

// Tensors are short-lived and large. glibc serves big blocks from fresh mmap
// pages by default, and the page faults then dominate cheap ops (and make
// timings depend on what ran before). Call once at program start.
inline void configure_allocator() {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
}

}  // namespace imputeformer
