#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace adrrec::kernels {

// Parsed mode string. Letters: p positional, b Bochner time, t absolute
// (calendar) time, s sinusoid time-diff, e exponential time-diff, l log1p
// time-diff, r relative distance, o noise regularizer. One attention head per
// kernel letter.
struct EmbeddingMode {
    std::vector<char> absolute;  // subset of {p, b, t}, canonical order
    std::vector<char> relative;  // subset of {s, e, l, r}, canonical order
    bool noise_enabled = false;

    int n_heads() const { return static_cast<int>(absolute.size() + relative.size()); }
    bool has(char letter) const;
    std::vector<char> letters() const;  // canonical order incl. 'o'
    std::string to_string() const;      // canonical dash-separated form

    bool operator==(const EmbeddingMode&) const = default;
};

// Dash-separated letters, order-insensitive, duplicates rejected.
EmbeddingMode parse_mode(const std::string& mode);

// Transformer-standard interleaved sinusoid table, base 10000:
// out[pos, 2i] = sin(pos / base^(2i/d)), out[pos, 2i+1] = cos(...).
Tensor fixed_positional(int64_t n, int64_t d, double base = 10000.0);

// D[i][j] = (t_i - t_j) / tau.
Tensor time_diff_matrix(const std::vector<int64_t>& times, double tau);
Tensor time_diff_batch(const ITensor& times, double tau);  // [B,N] -> [B,N,N]

// freq_h = base^(2h/C), strictly increasing in h.
std::vector<double> freq_ladder(int64_t channels, double base);

// exp(-|d|/freq_h): decays with distance, 1 at d = 0.
Tensor exp_diff_kernel(const Tensor& d, const std::vector<double>& freqs);
// log1p(|d|/freq_h): grows with distance, 0 at d = 0.
Tensor log1p_diff_kernel(const Tensor& d, const std::vector<double>& freqs);

// --- calendar decomposition (UTC) ---

enum class TimeUnit { Year, Month, Day, Weekday, Hour, Minute };

TimeUnit parse_time_unit(const std::string& name);  // throws ConfigError
std::string time_unit_name(TimeUnit u);

struct CivilTime {
    int year;
    int month;    // 1..12
    int day;      // 1..31
    int weekday;  // 0..6, 0 = Sunday
    int hour;     // 0..23
    int minute;   // 0..59
};

CivilTime civil_from_unix(int64_t seconds);

// Table cardinality for a unit; Year spans [epoch_year, epoch_year + n_years).
int64_t unit_cardinality(TimeUnit u, int n_years);
// Index of a timestamp under the unit; throws DataError when out of range.
int64_t unit_index(TimeUnit u, const CivilTime& c, int epoch_year, int n_years);

// Split d_head across units as evenly as possible, remainder to the leading
// units. Requires d_head >= number of units.
std::vector<int64_t> unit_widths(int64_t d_head, size_t n_units);

}  // namespace adrrec::kernels
