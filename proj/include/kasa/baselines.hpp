#pragma once

#include <cstdint>
#include <string>

#include "kasa/matrix.hpp"

namespace kasa {

enum class AdapterFlavor { lora, pissa, milora };

const char* flavor_name(AdapterFlavor flavor);

/// Classic two-factor adapter: update = scaling * a * b with a frozen base.
/// LoRA starts from zero; PiSSA/MiLoRA carve their init out of w0's
/// spectrum so frozen_base + a*b reconstructs w0.
struct LowRankAdapter {
    Matrix a;           // n x r
    Matrix b;           // r x m
    double scaling = 1.0;
    AdapterFlavor flavor = AdapterFlavor::lora;
    Matrix frozen_base;  // n x m

    std::size_t rank() const { return a.cols(); }
    std::size_t parameter_count() const { return a.size() + b.size(); }
};

LowRankAdapter init_lora(const Matrix& w0, std::size_t r, double alpha,
                         std::uint64_t seed, double init_std = 0.02);
LowRankAdapter init_pissa(const Matrix& w0, std::size_t r, std::uint64_t seed);
LowRankAdapter init_milora(const Matrix& w0, std::size_t r, std::uint64_t seed);

/// y = frozen_base * x + scaling * a * (b * x)
Matrix forward(const LowRankAdapter& adapter, const Matrix& x);

/// frozen_base + scaling * a * b
Matrix merge(const LowRankAdapter& adapter);

// Checkpoint container shared with the KaSA format; magic LORA1 / PISA1 /
// MILO1, header "MAGIC n m r scaling", then binary a and b.
void save_checkpoint(const LowRankAdapter& adapter, const std::string& path);
LowRankAdapter load_checkpoint_lowrank(const std::string& path);

}  // namespace kasa
