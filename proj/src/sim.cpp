#include "mm/prob.hpp"

namespace mm {
namespace { [[maybe_unused]] int placeholder_sim = 0; }
}  // namespace mm
