#pragma once

#include "splatctl/kernels.hpp"

namespace splatctl::kernels {

extern const KernelTable kScalarTable;
#if defined(SPLATCTL_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

} // namespace splatctl::kernels
