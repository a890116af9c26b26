#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "core.hpp"

namespace mfgnoise {

enum class Block { X = 0, P = 1, U = 2 };

inline const char* block_name(Block b) {
    switch (b) {
        case Block::X: return "x";
        case Block::P: return "p";
        case Block::U: return "u";
    }
    return "?";
}

/// c + Mx x + Mp p + Mu u
struct AffineMap {
    Eigen::VectorXd c;
    Eigen::MatrixXd mx, mp, mu;
};

struct Monomial {
    double coef = 0.0;
    std::vector<int> powers;  // over z = (x, p, u)
};

/// Per-output sums of monomials of total degree <= 3.
struct PolynomialMap {
    std::vector<std::vector<Monomial>> outputs;
};

struct BuiltinMap {
    std::string name;
    std::vector<double> params;
};

/// A coefficient R^dx x R^dp x R^du -> R^out drawn from a small catalog.
class CoefficientField {
public:
    using Kind = std::variant<AffineMap, PolynomialMap, BuiltinMap>;

    CoefficientField() = default;

    static CoefficientField zero(std::size_t out, std::size_t dx, std::size_t dp, std::size_t du) {
        AffineMap a{Eigen::VectorXd::Zero(out), Eigen::MatrixXd::Zero(out, dx), Eigen::MatrixXd::Zero(out, dp),
                    Eigen::MatrixXd::Zero(out, du)};
        return affine(std::move(a));
    }

    static CoefficientField affine(AffineMap a) {
        const auto out = static_cast<std::size_t>(a.c.size());
        if (static_cast<std::size_t>(a.mx.rows()) != out || static_cast<std::size_t>(a.mp.rows()) != out ||
            static_cast<std::size_t>(a.mu.rows()) != out)
            throw ValidationError("affine coefficient: row count mismatch");
        CoefficientField f;
        f.out_ = out;
        f.dx_ = static_cast<std::size_t>(a.mx.cols());
        f.dp_ = static_cast<std::size_t>(a.mp.cols());
        f.du_ = static_cast<std::size_t>(a.mu.cols());
        f.kind_ = std::move(a);
        f.check_dims();
        return f;
    }

    static CoefficientField polynomial(PolynomialMap poly, std::size_t dx, std::size_t dp, std::size_t du) {
        CoefficientField f;
        f.out_ = poly.outputs.size();
        f.dx_ = dx;
        f.dp_ = dp;
        f.du_ = du;
        const std::size_t n = dx + dp + du;
        for (const auto& terms : poly.outputs) {
            for (const auto& t : terms) {
                if (t.powers.size() != n) throw ValidationError("polynomial term: power vector has wrong length");
                int deg = 0;
                for (int e : t.powers) {
                    if (e < 0) throw ValidationError("polynomial term: negative power");
                    deg += e;
                }
                if (deg > 3) throw ValidationError("polynomial term: degree exceeds 3");
                if (!std::isfinite(t.coef)) throw ValidationError("polynomial term: non-finite coefficient");
            }
        }
        f.kind_ = std::move(poly);
        f.check_dims();
        return f;
    }

    static CoefficientField builtin(const std::string& name, std::vector<double> params, std::size_t dx,
                                    std::size_t dp, std::size_t du);

    std::size_t out_dim() const { return out_; }
    std::size_t dim(Block b) const { return b == Block::X ? dx_ : b == Block::P ? dp_ : du_; }
    std::size_t in_dim() const { return dx_ + dp_ + du_; }
    const Kind& kind() const { return kind_; }
    bool is_affine() const { return std::holds_alternative<AffineMap>(kind_); }
    bool is_builtin() const { return std::holds_alternative<BuiltinMap>(kind_); }
    std::string kind_name() const {
        return std::visit(
            [](const auto& k) -> std::string {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, AffineMap>) return "affine";
                else if constexpr (std::is_same_v<K, PolynomialMap>) return "polynomial";
                else return "builtin:" + k.name;
            },
            kind_);
    }

    /// Whether the field depends on the given input block at all.
    bool reads(Block b) const {
        if (dim(b) == 0) return false;
        return std::visit(
            [&](const auto& k) -> bool {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, AffineMap>) {
                    const Eigen::MatrixXd& m = b == Block::X ? k.mx : b == Block::P ? k.mp : k.mu;
                    return m.size() > 0 && m.cwiseAbs().maxCoeff() > 0.0;
                } else if constexpr (std::is_same_v<K, PolynomialMap>) {
                    const std::size_t off = offset(b);
                    for (const auto& terms : k.outputs)
                        for (const auto& t : terms) {
                            if (t.coef == 0.0) continue;
                            for (std::size_t j = 0; j < dim(b); ++j)
                                if (t.powers[off + j] > 0) return true;
                        }
                    return false;
                } else {
                    return builtin_reads_[static_cast<int>(b)];
                }
            },
            kind_);
    }

    bool is_zero() const {
        return std::visit(
            [&](const auto& k) -> bool {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, AffineMap>) {
                    return (k.c.size() == 0 || k.c.cwiseAbs().maxCoeff() == 0.0) && !reads(Block::X) &&
                           !reads(Block::P) && !reads(Block::U);
                } else if constexpr (std::is_same_v<K, PolynomialMap>) {
                    for (const auto& terms : k.outputs)
                        for (const auto& t : terms)
                            if (t.coef != 0.0) return false;
                    return true;
                } else {
                    return false;
                }
            },
            kind_);
    }

    /// out must hold out_dim() entries; u may be empty when du = 0.
    void evaluate(const double* x, const double* p, const double* u, double* out) const {
        std::visit(
            [&](const auto& k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, AffineMap>) {
                    for (std::size_t i = 0; i < out_; ++i) {
                        double s = k.c[static_cast<Eigen::Index>(i)];
                        for (std::size_t j = 0; j < dx_; ++j) s += k.mx(i, j) * x[j];
                        for (std::size_t j = 0; j < dp_; ++j) s += k.mp(i, j) * p[j];
                        for (std::size_t j = 0; j < du_; ++j) s += k.mu(i, j) * u[j];
                        out[i] = s;
                    }
                } else if constexpr (std::is_same_v<K, PolynomialMap>) {
                    std::array<double, 3 * kMaxDim> z{};
                    gather(x, p, u, z.data());
                    for (std::size_t i = 0; i < out_; ++i) {
                        double s = 0.0;
                        for (const auto& t : k.outputs[i]) {
                            double v = t.coef;
                            for (std::size_t j = 0; j < t.powers.size(); ++j)
                                for (int e = 0; e < t.powers[j]; ++e) v *= z[j];
                            s += v;
                        }
                        out[i] = s;
                    }
                } else {
                    builtin_fn_(k.params, x, p, u, out);
                }
            },
            kind_);
    }

    std::vector<double> operator()(std::span<const double> x, std::span<const double> p,
                                   std::span<const double> u = {}) const {
        std::vector<double> out(out_);
        evaluate(x.data(), p.data(), u.data(), out.data());
        return out;
    }

    /// Exact operator norm of an affine block.
    double affine_block_norm(Block b) const {
        const auto& a = std::get<AffineMap>(kind_);
        const Eigen::MatrixXd& m = b == Block::X ? a.mx : b == Block::P ? a.mp : a.mu;
        if (m.size() == 0) return 0.0;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        return svd.singularValues()(0);
    }

    /// Upper bound on sup |D_b f| over the product box, from interval bounds
    /// on each partial derivative (exact for a single monomial per entry).
    double polynomial_block_bound(Block b, const Box& xb, const Box& pb, const Box& ub) const {
        const auto& poly = std::get<PolynomialMap>(kind_);
        const std::size_t n = in_dim();
        std::vector<double> zmax(n);
        for (std::size_t j = 0; j < dx_; ++j) zmax[j] = std::max(std::abs(xb.lo[j]), std::abs(xb.hi[j]));
        for (std::size_t j = 0; j < dp_; ++j) zmax[dx_ + j] = std::max(std::abs(pb.lo[j]), std::abs(pb.hi[j]));
        for (std::size_t j = 0; j < du_; ++j)
            zmax[dx_ + dp_ + j] = std::max(std::abs(ub.lo[j]), std::abs(ub.hi[j]));
        const std::size_t off = offset(b);
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(dim(b)));
        for (std::size_t i = 0; i < out_; ++i)
            for (std::size_t j = 0; j < dim(b); ++j) {
                double s = 0.0;
                for (const auto& t : poly.outputs[i]) {
                    const int e = t.powers[off + j];
                    if (e == 0) continue;
                    double v = std::abs(t.coef) * e;
                    for (std::size_t k = 0; k < n; ++k) {
                        const int ek = k == off + j ? e - 1 : t.powers[k];
                        for (int r = 0; r < ek; ++r) v *= zmax[k];
                    }
                    s += v;
                }
                jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
            }
        if (jac.size() == 0) return 0.0;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
        return svd.singularValues()(0);
    }

private:
    using BuiltinFn = std::function<void(const std::vector<double>&, const double*, const double*, const double*,
                                         double*)>;

    std::size_t offset(Block b) const { return b == Block::X ? 0 : b == Block::P ? dx_ : dx_ + dp_; }

    void gather(const double* x, const double* p, const double* u, double* z) const {
        for (std::size_t j = 0; j < dx_; ++j) z[j] = x[j];
        for (std::size_t j = 0; j < dp_; ++j) z[dx_ + j] = p[j];
        for (std::size_t j = 0; j < du_; ++j) z[dx_ + dp_ + j] = u[j];
    }

    void check_dims() const {
        if (out_ == 0 || out_ > kMaxDim * kMaxDim || dx_ > kMaxDim || dp_ > kMaxDim || du_ > kMaxDim)
            throw ValidationError("coefficient dimensions out of range");
    }

    std::size_t out_ = 0, dx_ = 0, dp_ = 0, du_ = 0;
    Kind kind_;
    BuiltinFn builtin_fn_;
    std::array<bool, 3> builtin_reads_{false, false, false};
};

struct BuiltinInfo {
    std::size_t n_params;
    std::array<bool, 3> reads;  // x, p, u
    std::string summary;
};

/// Named nonlinear coefficients. All act on scalar blocks except tanh and
/// sine_perturbed, which act componentwise on x.
inline const std::map<std::string, BuiltinInfo>& builtin_coefficients() {
    static const std::map<std::string, BuiltinInfo> table{
        {"geometric_drift", {2, {true, true, false}, "(r0 + r_amp*sin(pi*x)/(1+p))*p, params r0, r_amp"}},
        {"tanh", {0, {true, false, false}, "tanh(x) componentwise"}},
        {"sine_perturbed", {1, {true, false, false}, "x + a*sin(x) componentwise, params a"}},
        {"cubic", {0, {true, false, false}, "x^3 componentwise"}},
    };
    return table;
}

inline CoefficientField CoefficientField::builtin(const std::string& name, std::vector<double> params,
                                                  std::size_t dx, std::size_t dp, std::size_t du) {
    const auto& table = builtin_coefficients();
    const auto it = table.find(name);
    if (it == table.end()) throw ValidationError("unknown builtin coefficient '" + name + "'");
    if (params.size() != it->second.n_params)
        throw ValidationError("builtin coefficient '" + name + "' expects " + std::to_string(it->second.n_params) +
                              " parameters");
    for (double v : params)
        if (!std::isfinite(v)) throw ValidationError("builtin coefficient '" + name + "': non-finite parameter");
    CoefficientField f;
    f.dx_ = dx;
    f.dp_ = dp;
    f.du_ = du;
    f.builtin_reads_ = it->second.reads;
    if (name == "geometric_drift") {
        if (dx != 1 || dp != 1) throw ValidationError("geometric_drift requires d = m = 1");
        f.out_ = 1;
        f.builtin_fn_ = [](const std::vector<double>& k, const double* x, const double* p, const double*, double* o) {
            o[0] = (k[0] + k[1] * std::sin(std::numbers::pi * x[0]) / (1.0 + p[0])) * p[0];
        };
    } else {
        if (dx == 0) throw ValidationError("builtin '" + name + "' reads x");
        f.out_ = dx;
        if (name == "tanh") {
            f.builtin_fn_ = [dx](const std::vector<double>&, const double* x, const double*, const double*, double* o) {
                for (std::size_t i = 0; i < dx; ++i) o[i] = std::tanh(x[i]);
            };
        } else if (name == "sine_perturbed") {
            f.builtin_fn_ = [dx](const std::vector<double>& k, const double* x, const double*, const double*,
                                 double* o) {
                for (std::size_t i = 0; i < dx; ++i) o[i] = x[i] + k[0] * std::sin(x[i]);
            };
        } else {
            f.builtin_fn_ = [dx](const std::vector<double>&, const double* x, const double*, const double*, double* o) {
                for (std::size_t i = 0; i < dx; ++i) o[i] = x[i] * x[i] * x[i];
            };
        }
    }
    f.kind_ = BuiltinMap{name, std::move(params)};
    f.check_dims();
    return f;
}

// Convenience constructors for scalar-block affine maps used throughout the
// catalog and tests.
inline CoefficientField affine_1d(double c, double ax, double ap, double au, std::size_t du = 1) {
    AffineMap a;
    a.c = Eigen::VectorXd::Constant(1, c);
    a.mx = Eigen::MatrixXd::Constant(1, 1, ax);
    a.mp = Eigen::MatrixXd::Constant(1, 1, ap);
    a.mu = Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(du), au);
    return CoefficientField::affine(std::move(a));
}

}  // namespace mfgnoise
