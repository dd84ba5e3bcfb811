#include "fiolab/grid.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

#include <fmt/format.h>

namespace fiolab {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

void run_fft(const GridSpec& g, std::vector<Complex>& data, int sign) {
    int dims[3];
    for (int i = 0; i < g.n; ++i) dims[i] = g.N[i];
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan p;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        p = fftw_plan_dft(g.n, dims, ptr, ptr, sign, FFTW_ESTIMATE);
    }
    if (!p) throw ResourceError("FFTW could not create a plan");
    fftw_execute(p);
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(p);
}

}  // namespace

GridSpec GridSpec::cube(int n, int N, double L) {
    if (n < 2 || n > 3) throw PreconditionError("grid: n must be 2 or 3");
    if (!is_pow2(N) || N < 64 || N > 2048) throw PreconditionError("grid: N must be a power of two in [64, 2048]");
    if (!(L > 0)) throw PreconditionError("grid: L must be positive");
    GridSpec g;
    g.n = n;
    for (int i = 0; i < n; ++i) {
        g.N[i] = N;
        g.L[i] = L;
    }
    return g;
}

GridSpec GridSpec::box(int n, std::array<int, 3> N, std::array<double, 3> L, std::array<double, 3> c) {
    GridSpec g;
    g.n = n;
    for (int i = 0; i < 3; ++i) {
        g.N[i] = i < n ? N[i] : 1;
        g.L[i] = i < n ? L[i] : 1.0;
        g.center[i] = i < n ? c[i] : 0.0;
    }
    g.validate();
    return g;
}

void GridSpec::validate() const {
    if (n < 2 || n > 3) throw PreconditionError("grid: n must be 2 or 3");
    for (int i = 0; i < n; ++i) {
        if (N[i] < 4 || N[i] % 2 != 0) throw PreconditionError("grid: N must be even and >= 4");
        if (!(L[i] > 0) || !std::isfinite(center[i])) throw PreconditionError("grid: bad extent");
    }
}

bool GridSpec::operator==(const GridSpec& o) const {
    return n == o.n && N == o.N && L == o.L && center == o.center;
}

std::size_t GridSpec::size() const {
    std::size_t s = 1;
    for (int i = 0; i < n; ++i) s *= static_cast<std::size_t>(N[i]);
    return s;
}

double GridSpec::cell_volume() const {
    double v = 1.0;
    for (int i = 0; i < n; ++i) v *= h(i);
    return v;
}

double GridSpec::min_nyquist() const {
    double v = nyquist(0);
    for (int i = 1; i < n; ++i) v = std::min(v, nyquist(i));
    return v;
}

std::array<int, 3> GridSpec::unflatten(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int i = n - 1; i >= 0; --i) {
        idx[i] = static_cast<int>(flat % N[i]);
        flat /= N[i];
    }
    return idx;
}

std::size_t GridSpec::flatten(const std::array<int, 3>& idx) const {
    std::size_t f = 0;
    for (int i = 0; i < n; ++i) f = f * N[i] + static_cast<std::size_t>(idx[i]);
    return f;
}

Vec GridSpec::point(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = x_coord(i, idx[i]);
    return x;
}

Vec GridSpec::frequency(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi(i) = freq_coord(i, idx[i]);
    return xi;
}

bool GridSpec::is_cube() const {
    for (int i = 1; i < n; ++i)
        if (N[i] != N[0] || L[i] != L[0]) return false;
    return true;
}

bool GridSpec::contains(const Vec& x) const {
    for (int i = 0; i < n; ++i)
        if (x(i) < corner(i) || x(i) >= corner(i) + L[i]) return false;
    return true;
}

std::size_t GridSpec::nearest(const Vec& x) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int i = 0; i < n; ++i) {
        long v = std::lround((x(i) - corner(i)) / h(i));
        v %= N[i];
        if (v < 0) v += N[i];
        idx[i] = static_cast<int>(v);
    }
    return flatten(idx);
}

// --- gridded functions ------------------------------------------------------

GriddedFunction::GriddedFunction(GridSpec g) : grid(g), values(g.size(), Complex(0.0)) {}

GriddedFunction::GriddedFunction(GridSpec g, std::vector<Complex> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw PreconditionError("gridded function: size mismatch");
}

GriddedFunction GriddedFunction::sample(const GridSpec& g, const std::function<Complex(const Vec&)>& f) {
    GriddedFunction out(g);
    const auto n = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out.values[i] = f(g.point(static_cast<std::size_t>(i)));
    return out;
}

double GriddedFunction::l1() const {
    double s = 0.0;
    for (const auto& v : values) s += std::abs(v);
    return s * grid.cell_volume();
}

double GriddedFunction::l2() const {
    double s = 0.0;
    for (const auto& v : values) s += std::norm(v);
    return std::sqrt(s * grid.cell_volume());
}

double GriddedFunction::linf() const {
    double s = 0.0;
    for (const auto& v : values) s = std::max(s, std::abs(v));
    return s;
}

// --- FFT --------------------------------------------------------------------

void fft_forward_inplace(const GridSpec& g, std::vector<Complex>& data) {
    if (data.size() != g.size()) throw PreconditionError("fft: size mismatch");
    run_fft(g, data, FFTW_FORWARD);
    const double vol = g.cell_volume();
    // phase factor for the box corner
    std::vector<std::vector<Complex>> ph(g.n);
    for (int a = 0; a < g.n; ++a) {
        ph[a].resize(g.N[a]);
        for (int j = 0; j < g.N[a]; ++j) ph[a][j] = cis(-g.corner(a) * g.freq_coord(a, j));
    }
    const auto total = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < total; ++f) {
        const auto idx = g.unflatten(static_cast<std::size_t>(f));
        Complex p = vol;
        for (int a = 0; a < g.n; ++a) p *= ph[a][idx[a]];
        data[f] *= p;
    }
}

void fft_inverse_inplace(const GridSpec& g, std::vector<Complex>& data) {
    if (data.size() != g.size()) throw PreconditionError("fft: size mismatch");
    double vol = 1.0;
    for (int a = 0; a < g.n; ++a) vol *= g.L[a];
    std::vector<std::vector<Complex>> ph(g.n);
    for (int a = 0; a < g.n; ++a) {
        ph[a].resize(g.N[a]);
        for (int j = 0; j < g.N[a]; ++j) ph[a][j] = cis(g.corner(a) * g.freq_coord(a, j));
    }
    const auto total = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < total; ++f) {
        const auto idx = g.unflatten(static_cast<std::size_t>(f));
        Complex p = 1.0 / vol;
        for (int a = 0; a < g.n; ++a) p *= ph[a][idx[a]];
        data[f] *= p;
    }
    run_fft(g, data, FFTW_BACKWARD);
}

Spectrum forward_fft(const GriddedFunction& f) {
    Spectrum s{f.grid, f.values};
    fft_forward_inplace(s.grid, s.coeffs);
    return s;
}

GriddedFunction inverse_fft(Spectrum s) {
    fft_inverse_inplace(s.grid, s.coeffs);
    return GriddedFunction(s.grid, std::move(s.coeffs));
}

// --- deltas -----------------------------------------------------------------

DeltaApproximant::DeltaApproximant(Vec zz, GridSpec g) : z(std::move(zz)), grid(g) {
    if (z.size() != g.n) throw PreconditionError("delta: dimension mismatch");
    if (!g.contains(z)) throw DomainError("delta: centre outside the grid box");
    cell = g.nearest(z);
    const double vol = g.cell_volume();
    mass_value = 1.0 / vol;
    // nudge so that the lattice L1 sum is exactly one
    for (int it = 0; it < 4 && mass_value * vol != 1.0; ++it)
        mass_value = std::nextafter(mass_value, mass_value * vol > 1.0 ? 0.0 : 2 * mass_value);
}

GriddedFunction DeltaApproximant::to_function() const {
    GriddedFunction f(grid);
    f.values[cell] = mass_value;
    return f;
}

// --- I/O --------------------------------------------------------------------

void write_csv(const std::string& path, const GriddedFunction& f) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    const int n = f.grid.n;
    for (int i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
    out << "re,im\n";
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const Vec x = f.grid.point(i);
        std::string line;
        for (int a = 0; a < n; ++a) line += fmt::format("{:.17g},", x(a));
        line += fmt::format("{:.17g},{:.17g}\n", f.values[i].real(), f.values[i].imag());
        out << line;
    }
}

namespace {

template <class T>
void put_le(std::string& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const unsigned char* p) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

void write_fiog(const std::string& path, const GriddedFunction& f) {
    const GridSpec& g = f.grid;
    if (!g.is_cube()) throw PreconditionError("FIOG export needs a cubic grid");
    for (int i = 0; i < g.n; ++i)
        if (g.center[i] != 0.0) throw PreconditionError("FIOG export needs a grid centred at the origin");
    std::string buf;
    buf.reserve(32 + 16 * f.values.size());
    buf.append("FIOG", 4);
    put_le<std::uint32_t>(buf, 1);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(g.n));
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(g.N[0]));
    put_le<double>(buf, g.L[0]);
    put_le<std::uint64_t>(buf, 0);
    for (const auto& v : f.values) {
        put_le<double>(buf, v.real());
        put_le<double>(buf, v.imag());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

GriddedFunction read_fiog(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 32 || buf.compare(0, 4, "FIOG") != 0) throw DataError(path + ": not a FIOG file");
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const auto version = get_le<std::uint32_t>(p + 4);
    const auto n = get_le<std::uint32_t>(p + 8);
    const auto N = get_le<std::uint32_t>(p + 12);
    const auto L = get_le<double>(p + 16);
    if (version != 1) throw DataError(path + ": unsupported FIOG version");
    if (n < 2 || n > 3 || N < 4 || N > 65536) throw DataError(path + ": bad FIOG header");
    GridSpec g;
    g.n = static_cast<int>(n);
    for (int i = 0; i < g.n; ++i) {
        g.N[i] = static_cast<int>(N);
        g.L[i] = L;
    }
    const std::size_t cnt = g.size();
    if (buf.size() != 32 + 16 * cnt) throw DataError(path + ": truncated FIOG payload");
    std::vector<Complex> v(cnt);
    for (std::size_t i = 0; i < cnt; ++i)
        v[i] = Complex(get_le<double>(p + 32 + 16 * i), get_le<double>(p + 40 + 16 * i));
    return GriddedFunction(g, std::move(v));
}

}  // namespace fiolab
