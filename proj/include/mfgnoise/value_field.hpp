#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"

namespace mfgnoise {

/// Regular tensor grid on omega x p_box; n_x nodes per x-axis, n_p per p-axis.
/// Spatial node s = ix * n_p_total + ip with ix, ip row-major multi-indices.
struct Grid {
    Box omega;
    std::size_t n_x = 2;
    Box p_box;
    std::size_t n_p = 2;

    Grid() = default;
    Grid(Box om, std::size_t nx, Box pb, std::size_t np) : omega(std::move(om)), n_x(nx), p_box(std::move(pb)), n_p(np) {
        if (n_x < 2 || n_p < 2) throw ValidationError("grid needs at least 2 nodes per axis");
        if (!omega.well_formed() || !p_box.well_formed()) throw ValidationError("grid boxes must be well formed");
    }

    std::size_t d() const { return omega.dim(); }
    std::size_t m() const { return p_box.dim(); }

    std::size_t n_x_total() const { return ipow(n_x, d()); }
    std::size_t n_p_total() const { return ipow(n_p, m()); }
    std::size_t n_space() const { return n_x_total() * n_p_total(); }

    static double axis_node(double lo, double hi, std::size_t n, std::size_t i) {
        if (i + 1 == n) return hi;
        return lo + static_cast<double>(i) * ((hi - lo) / static_cast<double>(n - 1));
    }

    double x_node(std::size_t axis, std::size_t i) const { return axis_node(omega.lo[axis], omega.hi[axis], n_x, i); }
    double p_node(std::size_t axis, std::size_t i) const { return axis_node(p_box.lo[axis], p_box.hi[axis], n_p, i); }

    void node(std::size_t s, double* x, double* p) const {
        std::size_t ix = s / n_p_total(), ip = s % n_p_total();
        for (std::size_t a = d(); a-- > 0;) {
            x[a] = x_node(a, ix % n_x);
            ix /= n_x;
        }
        for (std::size_t a = m(); a-- > 0;) {
            p[a] = p_node(a, ip % n_p);
            ip /= n_p;
        }
    }

    /// Per-axis multi-index of node s: first d entries x, then m entries p.
    void multi_index(std::size_t s, std::size_t* idx) const {
        std::size_t ix = s / n_p_total(), ip = s % n_p_total();
        for (std::size_t a = d(); a-- > 0;) {
            idx[a] = ix % n_x;
            ix /= n_x;
        }
        for (std::size_t a = m(); a-- > 0;) {
            idx[d() + a] = ip % n_p;
            ip /= n_p;
        }
    }

    std::size_t flat(const std::size_t* idx) const {
        std::size_t ix = 0, ip = 0;
        for (std::size_t a = 0; a < d(); ++a) ix = ix * n_x + idx[a];
        for (std::size_t a = 0; a < m(); ++a) ip = ip * n_p + idx[d() + a];
        return ix * n_p_total() + ip;
    }

    bool operator==(const Grid& o) const {
        return omega.lo == o.omega.lo && omega.hi == o.omega.hi && p_box.lo == o.p_box.lo &&
               p_box.hi == o.p_box.hi && n_x == o.n_x && n_p == o.n_p;
    }

    static std::size_t ipow(std::size_t b, std::size_t e) {
        std::size_t r = 1;
        for (std::size_t i = 0; i < e; ++i) r *= b;
        return r;
    }
};

namespace detail {

/// Cell index and weight of z on a regular axis. Weights snap to 0/1 within
/// 1e-12 so node queries are exact; outside the axis w leaves [0,1]
/// (linear extrapolation of the boundary cell).
inline void locate(double lo, double hi, std::size_t n, double z, std::size_t& cell, double& w) {
    const double h = (hi - lo) / static_cast<double>(n - 1);
    double r = std::floor((z - lo) / h);
    if (!(r >= 0.0)) r = 0.0;
    if (r > static_cast<double>(n - 2)) r = static_cast<double>(n - 2);
    cell = static_cast<std::size_t>(r);
    const double a = Grid::axis_node(lo, hi, n, cell);
    const double b = Grid::axis_node(lo, hi, n, cell + 1);
    w = (z - a) / (b - a);
    if (std::abs(w) < 1e-12) w = 0.0;
    if (std::abs(w - 1.0) < 1e-12) w = 1.0;
}

}  // namespace detail

/// Grid-sampled U(t, x, p) in R^out with multilinear interpolation in (t, x, p).
class ValueField {
public:
    ValueField() = default;
    ValueField(std::vector<double> times, Grid grid, std::size_t out_dim)
        : times_(std::move(times)), grid_(std::move(grid)), out_(out_dim) {
        if (times_.empty()) throw ValidationError("value field needs at least one time node");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1])) throw ValidationError("time nodes must be strictly increasing");
        values_.assign(times_.size() * grid_.n_space() * out_, 0.0);
    }

    const std::vector<double>& times() const { return times_; }
    const Grid& grid() const { return grid_; }
    std::size_t out_dim() const { return out_; }
    std::size_t n_times() const { return times_.size(); }
    std::size_t slice_size() const { return grid_.n_space() * out_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double* slice(std::size_t k) { return values_.data() + k * slice_size(); }
    const double* slice(std::size_t k) const { return values_.data() + k * slice_size(); }

    double at(std::size_t k, std::size_t s, std::size_t i) const { return values_[(k * grid_.n_space() + s) * out_ + i]; }
    double& at(std::size_t k, std::size_t s, std::size_t i) { return values_[(k * grid_.n_space() + s) * out_ + i]; }

    /// Index of the time node equal to t up to 1e-12 relative tolerance.
    std::optional<std::size_t> time_index(double t) const {
        const double tol = 1e-12 * std::max(1.0, std::abs(times_.back()));
        for (std::size_t k = 0; k < times_.size(); ++k)
            if (std::abs(times_[k] - t) <= tol) return k;
        return std::nullopt;
    }

    bool contains(double t, std::span<const double> x, std::span<const double> p) const {
        const double tol = 1e-12 * std::max(1.0, std::abs(times_.back()));
        if (t < times_.front() - tol || t > times_.back() + tol) return false;
        return grid_.omega.contains(x, 1e-12) && grid_.p_box.contains(p, 1e-12);
    }

    std::vector<double> evaluate(double t, std::span<const double> x, std::span<const double> p) const {
        if (x.size() != grid_.d() || p.size() != grid_.m())
            throw ValidationError("evaluate: query dimension mismatch");
        if (!contains(t, x, p))
            throw DomainError("evaluate: (t=" + std::to_string(t) + ", x=" + format_vector(x) +
                              ", p=" + format_vector(p) + ") outside the field domain");
        std::vector<double> out(out_);
        evaluate_extended(t, x.data(), p.data(), out.data());
        return out;
    }

    /// Multilinear in space with linear extrapolation outside the grid; time
    /// is clamped to the stored range.
    void evaluate_extended(double t, const double* x, const double* p, double* out) const {
        std::size_t k;
        double wt;
        if (times_.size() == 1 || t <= times_.front()) {
            k = 0;
            wt = 0.0;
        } else if (t >= times_.back()) {
            k = times_.size() - 2;
            wt = 1.0;
        } else {
            k = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1;
            wt = (t - times_[k]) / (times_[k + 1] - times_[k]);
            if (wt < 1e-12) wt = 0.0;
            if (wt > 1.0 - 1e-12) wt = 1.0;
        }
        if (wt == 0.0 || times_.size() == 1) {
            space_eval(k, x, p, out);
            return;
        }
        if (wt == 1.0) {
            space_eval(k + 1, x, p, out);
            return;
        }
        std::array<double, kMaxDim> b{};
        space_eval(k, x, p, out);
        space_eval(k + 1, x, p, b.data());
        for (std::size_t i = 0; i < out_; ++i) out[i] = (1.0 - wt) * out[i] + wt * b[i];
    }

    /// Spatial multilinear interpolation (with extrapolation) of slice k.
    void space_eval(std::size_t k, const double* x, const double* p, double* out) const {
        const std::size_t nd = grid_.d() + grid_.m();
        std::array<std::size_t, 2 * kMaxDim> cell{};
        std::array<double, 2 * kMaxDim> w{};
        for (std::size_t a = 0; a < grid_.d(); ++a)
            detail::locate(grid_.omega.lo[a], grid_.omega.hi[a], grid_.n_x, x[a], cell[a], w[a]);
        for (std::size_t a = 0; a < grid_.m(); ++a)
            detail::locate(grid_.p_box.lo[a], grid_.p_box.hi[a], grid_.n_p, p[a], cell[grid_.d() + a],
                           w[grid_.d() + a]);
        const double* base = slice(k);
        if (nd == 2) {
            // d = m = 1 fast path
            const std::size_t np = grid_.n_p;
            const std::size_t s00 = cell[0] * np + cell[1];
            const double w0 = w[0], w1 = w[1];
            for (std::size_t i = 0; i < out_; ++i) {
                const double v00 = base[s00 * out_ + i], v01 = base[(s00 + 1) * out_ + i];
                const double v10 = base[(s00 + np) * out_ + i], v11 = base[(s00 + np + 1) * out_ + i];
                const double a = w1 == 0.0 ? v00 : w1 == 1.0 ? v01 : (1.0 - w1) * v00 + w1 * v01;
                const double c = w1 == 0.0 ? v10 : w1 == 1.0 ? v11 : (1.0 - w1) * v10 + w1 * v11;
                out[i] = w0 == 0.0 ? a : w0 == 1.0 ? c : (1.0 - w0) * a + w0 * c;
            }
            return;
        }
        for (std::size_t i = 0; i < out_; ++i) out[i] = 0.0;
        std::array<std::size_t, 2 * kMaxDim> idx{};
        for (std::size_t mask = 0; mask < (std::size_t{1} << nd); ++mask) {
            double weight = 1.0;
            for (std::size_t a = 0; a < nd; ++a) {
                const bool hi = (mask >> a) & 1;
                idx[a] = cell[a] + (hi ? 1 : 0);
                weight *= hi ? w[a] : 1.0 - w[a];
            }
            if (weight == 0.0) continue;
            const double* v = base + grid_.flat(idx.data()) * out_;
            for (std::size_t i = 0; i < out_; ++i) out[i] += weight * v[i];
        }
    }

    static constexpr char kMagic[4] = {'M', 'F', 'G', 'F'};
    static constexpr std::uint32_t kFormatVersion = 1;

    /// Flat little-endian binary: magic, version, dims, boxes, times, values.
    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write field file '" + path + "'");
        auto put_u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
        auto put_f64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
        os.write(kMagic, 4);
        os.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof kFormatVersion);
        put_u64(grid_.d());
        put_u64(grid_.m());
        put_u64(out_);
        put_u64(times_.size());
        put_u64(grid_.n_x);
        put_u64(grid_.n_p);
        for (std::size_t a = 0; a < grid_.d(); ++a) {
            put_f64(grid_.omega.lo[a]);
            put_f64(grid_.omega.hi[a]);
        }
        for (std::size_t a = 0; a < grid_.m(); ++a) {
            put_f64(grid_.p_box.lo[a]);
            put_f64(grid_.p_box.hi[a]);
        }
        for (double t : times_) put_f64(t);
        os.write(reinterpret_cast<const char*>(values_.data()),
                 static_cast<std::streamsize>(values_.size() * sizeof(double)));
        if (!os) throw Error("failed writing field file '" + path + "'");
    }

    static ValueField load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw Error("cannot open field file '" + path + "'");
        char magic[4];
        std::uint32_t version = 0;
        is.read(magic, 4);
        is.read(reinterpret_cast<char*>(&version), sizeof version);
        if (!is || std::memcmp(magic, kMagic, 4) != 0) throw Error("'" + path + "' is not a field file");
        if (version != kFormatVersion) throw Error("unsupported field file version " + std::to_string(version));
        auto get_u64 = [&] {
            std::uint64_t v = 0;
            is.read(reinterpret_cast<char*>(&v), sizeof v);
            return v;
        };
        auto get_f64 = [&] {
            double v = 0;
            is.read(reinterpret_cast<char*>(&v), sizeof v);
            return v;
        };
        const auto d = get_u64(), m = get_u64(), out = get_u64(), nt = get_u64(), nx = get_u64(), np = get_u64();
        if (!is || d == 0 || m == 0 || d > kMaxDim || m > kMaxDim || out == 0 || out > kMaxDim || nt == 0 ||
            nt > (1u << 24) || nx < 2 || np < 2 || nx > (1u << 16) || np > (1u << 16))
            throw Error("corrupt field header in '" + path + "'");
        Box om = Box::cube(d, 0.0, 1.0), pb = Box::cube(m, 0.0, 1.0);
        for (std::size_t a = 0; a < d; ++a) {
            om.lo[a] = get_f64();
            om.hi[a] = get_f64();
        }
        for (std::size_t a = 0; a < m; ++a) {
            pb.lo[a] = get_f64();
            pb.hi[a] = get_f64();
        }
        std::vector<double> times(nt);
        for (auto& t : times) t = get_f64();
        ValueField f(std::move(times), Grid(std::move(om), nx, std::move(pb), np), out);
        is.read(reinterpret_cast<char*>(f.values_.data()),
                static_cast<std::streamsize>(f.values_.size() * sizeof(double)));
        if (!is) throw Error("truncated field file '" + path + "'");
        return f;
    }

private:
    std::vector<double> times_;
    Grid grid_;
    std::size_t out_ = 1;
    std::vector<double> values_;
};

/// Forward-difference Jacobian norms of one slice: operator norms of the
/// x-block, the p-block and the joint (x,p) Jacobian, maximized over cells.
struct SliceGradient {
    double dx_norm = 0.0;
    double dp_norm = 0.0;
    double joint = 0.0;
};

inline SliceGradient slice_gradient(const ValueField& f, std::size_t k) {
    const Grid& g = f.grid();
    const std::size_t d = g.d(), m = g.m(), nd = d + m, out = f.out_dim();
    std::array<double, 2 * kMaxDim> h{};
    for (std::size_t a = 0; a < d; ++a) h[a] = (g.omega.hi[a] - g.omega.lo[a]) / static_cast<double>(g.n_x - 1);
    for (std::size_t a = 0; a < m; ++a)
        h[d + a] = (g.p_box.hi[a] - g.p_box.lo[a]) / static_cast<double>(g.n_p - 1);
    std::array<std::size_t, 2 * kMaxDim> idx{};
    SliceGradient r;
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(nd));
    const double* v = f.slice(k);
    auto opnorm = [](const Eigen::MatrixXd& a) {
        if (a.rows() == 1 || a.cols() == 1) return a.norm();
        return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
    };
    for (std::size_t s = 0; s < g.n_space(); ++s) {
        g.multi_index(s, idx.data());
        bool interior = true;
        for (std::size_t a = 0; a < nd; ++a)
            if (idx[a] + 1 >= (a < d ? g.n_x : g.n_p)) interior = false;
        if (!interior) continue;
        for (std::size_t a = 0; a < nd; ++a) {
            ++idx[a];
            const std::size_t s2 = g.flat(idx.data());
            --idx[a];
            for (std::size_t i = 0; i < out; ++i)
                jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = (v[s2 * out + i] - v[s * out + i]) / h[a];
        }
        const auto jx = jac.leftCols(static_cast<Eigen::Index>(d));
        const auto jp = jac.rightCols(static_cast<Eigen::Index>(m));
        r.dx_norm = std::max(r.dx_norm, opnorm(jx));
        r.dp_norm = std::max(r.dp_norm, opnorm(jp));
        r.joint = std::max(r.joint, opnorm(jac));
    }
    return r;
}

}  // namespace mfgnoise
