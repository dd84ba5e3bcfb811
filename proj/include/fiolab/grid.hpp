#pragma once

#include "fiolab/core.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace fiolab {

// Periodic box with N_i points per axis, side L_i, centred at c.
// Points x = c - L/2 + l h, frequencies j/L in FFT order.
struct GridSpec {
    int n = 2;
    std::array<int, 3> N{1, 1, 1};
    std::array<double, 3> L{1.0, 1.0, 1.0};
    std::array<double, 3> center{0.0, 0.0, 0.0};

    // N a power of two in [64, 2048], box [-L/2, L/2)^n
    static GridSpec cube(int n, int N, double L);
    // any even N >= 4 per axis
    static GridSpec box(int n, std::array<int, 3> N, std::array<double, 3> L, std::array<double, 3> center);

    std::size_t size() const;
    double h(int axis) const { return L[axis] / N[axis]; }
    double cell_volume() const;
    double nyquist(int axis) const { return N[axis] / (2.0 * L[axis]); }
    double min_nyquist() const;
    double corner(int axis) const { return center[axis] - 0.5 * L[axis]; }
    double x_coord(int axis, int idx) const { return corner(axis) + idx * h(axis); }
    double freq_coord(int axis, int j) const {
        const int jj = j < N[axis] / 2 ? j : j - N[axis];
        return jj / L[axis];
    }
    std::array<int, 3> unflatten(std::size_t flat) const;
    std::size_t flatten(const std::array<int, 3>& idx) const;
    Vec point(std::size_t flat) const;
    Vec frequency(std::size_t flat) const;
    bool is_cube() const;
    bool contains(const Vec& x) const;
    // nearest grid index to x (periodic wrap)
    std::size_t nearest(const Vec& x) const;
    void validate() const;
    bool operator==(const GridSpec& o) const;
};

struct GriddedFunction {
    GridSpec grid;
    std::vector<Complex> values;

    GriddedFunction() = default;
    explicit GriddedFunction(GridSpec g);
    GriddedFunction(GridSpec g, std::vector<Complex> v);
    static GriddedFunction sample(const GridSpec& g, const std::function<Complex(const Vec&)>& f);

    double l1() const;
    double l2() const;
    double linf() const;
};

// coefficient j approximates the continuous transform at grid.frequency(j)
struct Spectrum {
    GridSpec grid;
    std::vector<Complex> coeffs;
};

Spectrum forward_fft(const GriddedFunction& f);
GriddedFunction inverse_fft(Spectrum s);
// in-place variants on raw storage
void fft_forward_inplace(const GridSpec& g, std::vector<Complex>& data);
void fft_inverse_inplace(const GridSpec& g, std::vector<Complex>& data);

struct DeltaApproximant {
    Vec z;           // requested centre
    GridSpec grid;
    std::size_t cell;  // flat index of the cell containing z
    double mass_value; // value on the cell, mass_value * cell_volume == 1

    DeltaApproximant(Vec z, GridSpec g);
    Vec support_point() const { return grid.point(cell); }
    GriddedFunction to_function() const;
};

// CSV with columns x1..xn, re, im
void write_csv(const std::string& path, const GriddedFunction& f);
// 32-byte little-endian header "FIOG", u32 version, u32 n, u32 N, f64 L, 8 reserved bytes,
// then (re, im) f64 pairs in row-major order. Cubic grids centred at the origin only.
void write_fiog(const std::string& path, const GriddedFunction& f);
GriddedFunction read_fiog(const std::string& path);

}  // namespace fiolab
