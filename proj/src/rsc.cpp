#include "mm/prob.hpp"

namespace mm {
namespace { [[maybe_unused]] int placeholder_rsc = 0; }
}  // namespace mm
