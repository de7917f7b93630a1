#include "gridfault/rng.hpp"

namespace gridfault {

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) return 0;
    // Rejection sampling over the top of the range keeps the draw unbiased.
    const std::uint64_t limit = ~0ULL - (~0ULL % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    Rng r(base ^ (0xA0761D6478BD642FULL * (stream + 1)));
    r.next_u64();
    return r.next_u64();
}

}  // namespace gridfault
