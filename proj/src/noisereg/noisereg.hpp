#pragma once

#include <cstdint>
#include <vector>

#include "core/graph.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace adrrec::noisereg {

// Learnable-noise linear layer parameters; sigma consumed through |.|.
struct NoisyLinearParams {
    Tensor mu_w;     // [m, n]
    Tensor sigma_w;  // [m, n]
    Tensor mu_b;     // [n]
    Tensor sigma_b;  // [n]
};

// y = (mu_w + |sigma_w| o eps_w)^T x + mu_b + |sigma_b| o eps_b.
// eps is supplied by the caller (zero at evaluation).
std::vector<double> noisy_linear_forward(const std::vector<double>& x,
                                         const NoisyLinearParams& p, const Tensor& eps_w,
                                         const Tensor& eps_b);

// i.i.d. standard normal draws, then the whole tensor is rescaled so its
// Euclidean norm never exceeds delta (the perturbation bound).
Tensor sample_noise(std::vector<int64_t> shape, RngStream& stream, double delta);

struct LnsrConfig {
    int64_t first_layer = 1;    // k, 1-based
    double layer_weight = 1.0;  // constant lambda per layer >= k
    double sigma_init = 0.017;
    double delta = 5.0;
};

// R = sum_{layer=k..L} lambda * mean over real tokens of ||clean - noisy||^2.
double lnsr(const std::vector<Tensor>& clean_taps, const std::vector<Tensor>& noisy_taps,
            const LnsrConfig& cfg, const BTensor& pad_mask);

ag::ValuePtr lnsr_graph(ag::Graph& g, const std::vector<ag::ValuePtr>& clean_taps,
                        const std::vector<ag::ValuePtr>& noisy_taps, const LnsrConfig& cfg,
                        const BTensor& pad_mask);

}  // namespace adrrec::noisereg
