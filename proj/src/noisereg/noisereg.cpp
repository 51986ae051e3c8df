#include "noisereg/noisereg.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace adrrec::noisereg {

std::vector<double> noisy_linear_forward(const std::vector<double>& x,
                                         const NoisyLinearParams& p, const Tensor& eps_w,
                                         const Tensor& eps_b) {
    const int64_t m = p.mu_w.dim(0), n = p.mu_w.dim(1);
    if (static_cast<int64_t>(x.size()) != m) throw InvariantError("noisy_linear: input width");
    if (!p.mu_w.same_shape(p.sigma_w) || !eps_w.same_shape(p.mu_w))
        throw InvariantError("noisy_linear: weight shape mismatch");
    if (p.mu_b.numel() != n || p.sigma_b.numel() != n || eps_b.numel() != n)
        throw InvariantError("noisy_linear: bias shape mismatch");
    std::vector<double> y(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) {
        double acc = p.mu_b[j] + std::abs(p.sigma_b[j]) * eps_b[j];
        for (int64_t i = 0; i < m; ++i)
            acc += (p.mu_w.at(i, j) + std::abs(p.sigma_w.at(i, j)) * eps_w.at(i, j)) *
                   x[static_cast<size_t>(i)];
        y[static_cast<size_t>(j)] = acc;
    }
    return y;
}

Tensor sample_noise(std::vector<int64_t> shape, RngStream& stream, double delta) {
    if (delta <= 0.0) throw ConfigError("perturbation bound delta must be positive");
    Tensor eps(std::move(shape));
    double sq = 0.0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        eps[i] = stream.normal();
        sq += eps[i] * eps[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > delta) {
        const double s = delta / norm;
        for (int64_t i = 0; i < eps.numel(); ++i) eps[i] *= s;
    }
    return eps;
}

namespace {

int64_t count_real(const BTensor& pad_mask) {
    int64_t n = 0;
    for (uint8_t m : pad_mask.data) n += m ? 1 : 0;
    return n;
}

void check_taps(size_t clean, size_t noisy, const LnsrConfig& cfg) {
    if (clean != noisy) throw InvariantError("lnsr: tap list length mismatch");
    if (clean == 0) throw InvariantError("lnsr: no layer taps");
    if (cfg.first_layer < 1 || cfg.first_layer > static_cast<int64_t>(clean))
        throw InvariantError("lnsr: first_layer outside [1, L]");
    if (cfg.layer_weight < 0.0) throw InvariantError("lnsr: negative layer weight");
}

}  // namespace

double lnsr(const std::vector<Tensor>& clean_taps, const std::vector<Tensor>& noisy_taps,
            const LnsrConfig& cfg, const BTensor& pad_mask) {
    check_taps(clean_taps.size(), noisy_taps.size(), cfg);
    const int64_t n_real = count_real(pad_mask);
    if (n_real == 0) throw InvariantError("lnsr: batch has no real tokens");
    const int64_t b = pad_mask.dim(0), n = pad_mask.dim(1);
    double r = 0.0;
    for (size_t l = static_cast<size_t>(cfg.first_layer) - 1; l < clean_taps.size(); ++l) {
        const Tensor& c = clean_taps[l];
        const Tensor& y = noisy_taps[l];
        if (!c.same_shape(y)) throw InvariantError("lnsr: tap shape mismatch");
        const int64_t d = c.dim(2);
        double acc = 0.0;
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t i = 0; i < n; ++i) {
                if (!pad_mask.at(bi, i)) continue;
                const double* cr = c.data() + (bi * n + i) * d;
                const double* yr = y.data() + (bi * n + i) * d;
                for (int64_t j = 0; j < d; ++j) {
                    const double diff = cr[j] - yr[j];
                    acc += diff * diff;
                }
            }
        r += cfg.layer_weight * acc / static_cast<double>(n_real);
    }
    return r;
}

ag::ValuePtr lnsr_graph(ag::Graph& g, const std::vector<ag::ValuePtr>& clean_taps,
                        const std::vector<ag::ValuePtr>& noisy_taps, const LnsrConfig& cfg,
                        const BTensor& pad_mask) {
    check_taps(clean_taps.size(), noisy_taps.size(), cfg);
    const int64_t n_real = count_real(pad_mask);
    if (n_real == 0) throw InvariantError("lnsr: batch has no real tokens");
    ag::ValuePtr total;
    for (size_t l = static_cast<size_t>(cfg.first_layer) - 1; l < clean_taps.size(); ++l) {
        auto diff = ag::sub(g, clean_taps[l], noisy_taps[l]);
        auto term = ag::masked_sq_mean(g, diff, pad_mask,
                                       cfg.layer_weight / static_cast<double>(n_real));
        total = total ? ag::add(g, total, term) : term;
    }
    return total;
}

}  // namespace adrrec::noisereg
