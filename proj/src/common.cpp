#include "strans/common.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace strans {

void tune_allocator() {
#if defined(__GLIBC__)
    // Fixed thresholds beat glibc's adaptive ones here: the training tape
    // frees and reallocates the same few-megabyte buffers every step.
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
#endif
}

}  // namespace strans
