#include "kernels/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace adrrec::kernels {

namespace {
constexpr char kCanonical[] = {'p', 'b', 't', 's', 'e', 'l', 'r'};
constexpr char kAbsolute[] = {'p', 'b', 't'};
constexpr char kRelative[] = {'s', 'e', 'l', 'r'};

bool contains(const char* arr, size_t n, char c) {
    return std::find(arr, arr + n, c) != arr + n;
}
}  // namespace

bool EmbeddingMode::has(char letter) const {
    if (letter == 'o') return noise_enabled;
    return std::find(absolute.begin(), absolute.end(), letter) != absolute.end() ||
           std::find(relative.begin(), relative.end(), letter) != relative.end();
}

std::vector<char> EmbeddingMode::letters() const {
    std::vector<char> out;
    for (char c : kCanonical)
        if (has(c)) out.push_back(c);
    if (noise_enabled) out.push_back('o');
    return out;
}

std::string EmbeddingMode::to_string() const {
    std::string s;
    for (char c : letters()) {
        if (!s.empty()) s += '-';
        s += c;
    }
    return s;
}

EmbeddingMode parse_mode(const std::string& mode) {
    if (mode.empty()) throw ConfigError("empty mode string");
    std::vector<char> seen;
    size_t pos = 0;
    while (pos <= mode.size()) {
        const size_t next = mode.find('-', pos);
        const std::string tok =
            mode.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (tok.size() != 1)
            throw ConfigError("bad mode token '" + tok + "' in '" + mode + "'");
        const char c = tok[0];
        if (c != 'o' && !contains(kCanonical, sizeof(kCanonical), c))
            throw ConfigError(std::string("unknown mode letter '") + c + "'");
        if (std::find(seen.begin(), seen.end(), c) != seen.end())
            throw ConfigError(std::string("duplicate mode letter '") + c + "'");
        seen.push_back(c);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    EmbeddingMode m;
    for (char c : kAbsolute)
        if (std::find(seen.begin(), seen.end(), c) != seen.end()) m.absolute.push_back(c);
    for (char c : kRelative)
        if (std::find(seen.begin(), seen.end(), c) != seen.end()) m.relative.push_back(c);
    m.noise_enabled = std::find(seen.begin(), seen.end(), 'o') != seen.end();
    if (m.n_heads() == 0) throw ConfigError("mode '" + mode + "' has no kernel letters");
    return m;
}

Tensor fixed_positional(int64_t n, int64_t d, double base) {
    Tensor out({n, d});
    for (int64_t p = 0; p < n; ++p)
        for (int64_t i = 0; i < d; i += 2) {
            const double freq = std::pow(base, static_cast<double>(i) / static_cast<double>(d));
            out.at(p, i) = std::sin(static_cast<double>(p) / freq);
            if (i + 1 < d) out.at(p, i + 1) = std::cos(static_cast<double>(p) / freq);
        }
    return out;
}

Tensor time_diff_matrix(const std::vector<int64_t>& times, double tau) {
    if (tau <= 0.0) throw ConfigError("tau must be positive");
    const int64_t n = static_cast<int64_t>(times.size());
    Tensor d({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            d.at(i, j) = static_cast<double>(times[static_cast<size_t>(i)] -
                                             times[static_cast<size_t>(j)]) /
                         tau;
    return d;
}

Tensor time_diff_batch(const ITensor& times, double tau) {
    if (tau <= 0.0) throw ConfigError("tau must be positive");
    const int64_t b = times.dim(0), n = times.dim(1);
    Tensor d({b, n, n});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j)
                d.at(bi, i, j) =
                    static_cast<double>(times.at(bi, i) - times.at(bi, j)) / tau;
    return d;
}

std::vector<double> freq_ladder(int64_t channels, double base) {
    std::vector<double> f(static_cast<size_t>(channels));
    for (int64_t h = 0; h < channels; ++h)
        f[static_cast<size_t>(h)] =
            std::pow(base, 2.0 * static_cast<double>(h) / static_cast<double>(channels));
    return f;
}

Tensor exp_diff_kernel(const Tensor& d, const std::vector<double>& freqs) {
    const int64_t c = static_cast<int64_t>(freqs.size());
    std::vector<int64_t> shape = d.shape();
    shape.push_back(c);
    Tensor out(shape);
    const int64_t n = d.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double ad = std::abs(d[i]);
        for (int64_t h = 0; h < c; ++h)
            out[i * c + h] = std::exp(-ad / freqs[static_cast<size_t>(h)]);
    }
    return out;
}

Tensor log1p_diff_kernel(const Tensor& d, const std::vector<double>& freqs) {
    const int64_t c = static_cast<int64_t>(freqs.size());
    std::vector<int64_t> shape = d.shape();
    shape.push_back(c);
    Tensor out(shape);
    const int64_t n = d.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double ad = std::abs(d[i]);
        for (int64_t h = 0; h < c; ++h)
            out[i * c + h] = std::log1p(ad / freqs[static_cast<size_t>(h)]);
    }
    return out;
}

TimeUnit parse_time_unit(const std::string& name) {
    if (name == "year") return TimeUnit::Year;
    if (name == "month") return TimeUnit::Month;
    if (name == "day") return TimeUnit::Day;
    if (name == "weekday") return TimeUnit::Weekday;
    if (name == "hour") return TimeUnit::Hour;
    if (name == "minute") return TimeUnit::Minute;
    throw ConfigError("unknown time unit '" + name + "'");
}

std::string time_unit_name(TimeUnit u) {
    switch (u) {
        case TimeUnit::Year: return "year";
        case TimeUnit::Month: return "month";
        case TimeUnit::Day: return "day";
        case TimeUnit::Weekday: return "weekday";
        case TimeUnit::Hour: return "hour";
        case TimeUnit::Minute: return "minute";
    }
    throw InvariantError("bad time unit");
}

CivilTime civil_from_unix(int64_t seconds) {
    int64_t days = seconds / 86400;
    int64_t rem = seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    // Howard Hinnant's civil_from_days.
    int64_t z = days + 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    CivilTime c;
    c.year = static_cast<int>(y + (m <= 2));
    c.month = static_cast<int>(m);
    c.day = static_cast<int>(d);
    c.weekday = static_cast<int>((days % 7 + 7 + 4) % 7);  // 1970-01-01 was a Thursday
    c.hour = static_cast<int>(rem / 3600);
    c.minute = static_cast<int>((rem % 3600) / 60);
    return c;
}

int64_t unit_cardinality(TimeUnit u, int n_years) {
    switch (u) {
        case TimeUnit::Year: return n_years;
        case TimeUnit::Month: return 12;
        case TimeUnit::Day: return 31;
        case TimeUnit::Weekday: return 7;
        case TimeUnit::Hour: return 24;
        case TimeUnit::Minute: return 60;
    }
    throw InvariantError("bad time unit");
}

int64_t unit_index(TimeUnit u, const CivilTime& c, int epoch_year, int n_years) {
    switch (u) {
        case TimeUnit::Year: {
            const int64_t i = c.year - epoch_year;
            if (i < 0 || i >= n_years)
                throw DataError("year " + std::to_string(c.year) + " outside table range [" +
                                std::to_string(epoch_year) + ", " +
                                std::to_string(epoch_year + n_years) + ")");
            return i;
        }
        case TimeUnit::Month: return c.month - 1;
        case TimeUnit::Day: return c.day - 1;
        case TimeUnit::Weekday: return c.weekday;
        case TimeUnit::Hour: return c.hour;
        case TimeUnit::Minute: return c.minute;
    }
    throw InvariantError("bad time unit");
}

std::vector<int64_t> unit_widths(int64_t d_head, size_t n_units) {
    if (n_units == 0) throw ConfigError("absolute time embedding needs at least one unit");
    if (d_head < static_cast<int64_t>(n_units))
        throw ConfigError("head width " + std::to_string(d_head) + " cannot host " +
                          std::to_string(n_units) + " time units");
    std::vector<int64_t> w(n_units, d_head / static_cast<int64_t>(n_units));
    const int64_t rem = d_head % static_cast<int64_t>(n_units);
    for (int64_t i = 0; i < rem; ++i) ++w[static_cast<size_t>(i)];
    return w;
}

}  // namespace adrrec::kernels
