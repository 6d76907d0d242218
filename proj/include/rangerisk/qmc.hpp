#pragma once

#include <cstdint>
#include <vector>

namespace rangerisk::qmc {

// Sequential Sobol sequence in up to 25 dimensions, 32-bit precision,
// Gray-code stepping. point(i) must be called with consecutive i.
class Sobol {
public:
    explicit Sobol(int dim);

    static constexpr int kMaxDim = 25;

    // Next point as raw 32-bit integers (one per dimension).
    void next(std::uint32_t* out);

    void reset();

private:
    int dim_;
    std::uint64_t index_ = 0;
    std::vector<std::uint32_t> state_;
    std::vector<std::uint32_t> dirs_;  // dim_ x 32, row-major
};

// SplitMix64 stream for deriving per-randomization shifts from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace rangerisk::qmc
