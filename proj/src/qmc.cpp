#include "rangerisk/qmc.hpp"

#include <algorithm>
#include <bit>

#include "rangerisk/errors.hpp"

namespace rangerisk::qmc {
namespace {

struct DirSpec {
    int s;               // polynomial degree
    std::uint32_t a;     // interior coefficient bits
    std::uint32_t m[7];  // initial direction integers
};

// Joe-Kuo style primitive polynomials and initial direction numbers for
// dimensions 2..25 (dimension 1 is the van der Corput sequence).
const DirSpec kSpecs[24] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
    {7, 7, {1, 1, 3, 13, 7, 35, 63}},
    {7, 8, {1, 3, 5, 9, 1, 25, 53}},
    {7, 14, {1, 3, 1, 13, 9, 35, 107}},
    {7, 19, {1, 1, 1, 9, 23, 13, 103}},
};

}  // namespace

Sobol::Sobol(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim) {
        throw DomainError("dimension", "Sobol dimension must be in [1, 25]");
    }
    dirs_.assign(static_cast<size_t>(dim) * 32, 0);
    state_.assign(dim, 0);

    // Dimension 1: v_k = 1 << (32-k).
    for (int k = 0; k < 32; ++k) dirs_[k] = 1u << (31 - k);

    for (int j = 1; j < dim; ++j) {
        const DirSpec& spec = kSpecs[j - 1];
        std::uint32_t* v = &dirs_[static_cast<size_t>(j) * 32];
        for (int k = 0; k < spec.s; ++k) v[k] = spec.m[k] << (31 - k);
        for (int k = spec.s; k < 32; ++k) {
            std::uint32_t vk = v[k - spec.s] ^ (v[k - spec.s] >> spec.s);
            for (int i = 1; i < spec.s; ++i) {
                if ((spec.a >> (spec.s - 1 - i)) & 1u) vk ^= v[k - i];
            }
            v[k] = vk;
        }
    }
}

void Sobol::reset() {
    index_ = 0;
    std::fill(state_.begin(), state_.end(), 0u);
}

void Sobol::next(std::uint32_t* out) {
    if (index_ == 0) {
        for (int j = 0; j < dim_; ++j) out[j] = 0u;
        ++index_;
        return;
    }
    // Gray-code step: flip along the lowest zero bit of the previous index.
    const int c = std::countr_one(index_ - 1);
    for (int j = 0; j < dim_; ++j) {
        state_[j] ^= dirs_[static_cast<size_t>(j) * 32 + c];
        out[j] = state_[j];
    }
    ++index_;
}

}  // namespace rangerisk::qmc
