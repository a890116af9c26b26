#pragma once

// JSON form of ProblemSpec. Layout is documented in schema/problem.schema.json.

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "coefficient.hpp"
#include "problem.hpp"

namespace mfgnoise {

using json = nlohmann::json;

namespace detail {

inline json box_to_json(const Box& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

inline Box box_from_json(const json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("lo") || !j.contains("hi"))
        throw ValidationError(what + ": box needs 'lo' and 'hi' arrays");
    Box b;
    b.lo = j.at("lo").get<std::vector<double>>();
    b.hi = j.at("hi").get<std::vector<double>>();
    return b;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (j.is_null()) return m;
    if (!j.is_array() || j.size() != rows) throw ValidationError(what + ": expected " + std::to_string(rows) + " rows");
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ValidationError(what + ": expected " + std::to_string(cols) + " columns");
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
    return m;
}

}  // namespace detail

inline json coefficient_to_json(const CoefficientField& f) {
    json j;
    j["inputs"] = {{"x", f.dim(Block::X)}, {"p", f.dim(Block::P)}, {"u", f.dim(Block::U)}};
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, AffineMap>) {
                j["kind"] = "affine";
                j["c"] = std::vector<double>(k.c.data(), k.c.data() + k.c.size());
                j["x"] = detail::matrix_to_json(k.mx);
                j["p"] = detail::matrix_to_json(k.mp);
                j["u"] = detail::matrix_to_json(k.mu);
            } else if constexpr (std::is_same_v<K, PolynomialMap>) {
                j["kind"] = "polynomial";
                json outs = json::array();
                for (const auto& terms : k.outputs) {
                    json o = json::array();
                    for (const auto& t : terms) o.push_back({{"coef", t.coef}, {"powers", t.powers}});
                    outs.push_back(o);
                }
                j["outputs"] = outs;
            } else {
                j["kind"] = "builtin";
                j["name"] = k.name;
                j["params"] = k.params;
            }
        },
        f.kind());
    return j;
}

/// `dx, dp, du` are the default input sizes when "inputs" is absent.
inline CoefficientField coefficient_from_json(const json& j, std::size_t out, std::size_t dx, std::size_t dp,
                                              std::size_t du, const std::string& what) {
    if (!j.is_object() || !j.contains("kind")) throw ValidationError(what + ": coefficient needs a 'kind'");
    if (j.contains("inputs")) {
        const auto& in = j.at("inputs");
        dx = in.value("x", dx);
        dp = in.value("p", dp);
        du = in.value("u", du);
    }
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "zero") return CoefficientField::zero(out, dx, dp, du);
    if (kind == "affine") {
        AffineMap a;
        a.c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
        if (j.contains("c")) {
            const auto c = j.at("c").get<std::vector<double>>();
            if (c.size() != out) throw ValidationError(what + ": 'c' must have " + std::to_string(out) + " entries");
            for (std::size_t i = 0; i < out; ++i) a.c(static_cast<Eigen::Index>(i)) = c[i];
        }
        a.mx = detail::matrix_from_json(j.value("x", json()), out, dx, what + ".x");
        a.mp = detail::matrix_from_json(j.value("p", json()), out, dp, what + ".p");
        a.mu = detail::matrix_from_json(j.value("u", json()), out, du, what + ".u");
        return CoefficientField::affine(std::move(a));
    }
    if (kind == "polynomial") {
        PolynomialMap poly;
        for (const auto& o : j.at("outputs")) {
            std::vector<Monomial> terms;
            for (const auto& t : o) terms.push_back({t.at("coef").get<double>(), t.at("powers").get<std::vector<int>>()});
            poly.outputs.push_back(std::move(terms));
        }
        if (poly.outputs.size() != out)
            throw ValidationError(what + ": polynomial must have " + std::to_string(out) + " outputs");
        return CoefficientField::polynomial(std::move(poly), dx, dp, du);
    }
    if (kind == "builtin")
        return CoefficientField::builtin(j.at("name").get<std::string>(), j.value("params", std::vector<double>{}),
                                         dx, dp, du);
    throw ValidationError(what + ": unknown coefficient kind '" + kind + "'");
}

inline json problem_to_json(const ProblemSpec& s) {
    json j;
    j["name"] = s.name;
    j["d"] = s.d;
    j["m"] = s.m;
    j["omega"] = detail::box_to_json(s.omega);
    j["omega_is_truncation"] = s.omega_is_truncation;
    j["p_box"] = detail::box_to_json(s.p_box);
    j["u_box"] = detail::box_to_json(s.u_box);
    j["horizon"] = s.horizon;
    j["sigma"] = s.sigma;
    j["discount"] = s.discount;
    j["coefficients"] = {{"F", coefficient_to_json(s.f_coef)},
                         {"G", coefficient_to_json(s.g_coef)},
                         {"b", coefficient_to_json(s.b_coef)},
                         {"U0", coefficient_to_json(s.u0)}};
    if (s.volatility) j["coefficients"]["volatility"] = coefficient_to_json(*s.volatility);
    j["buffer"] = {{"auto", s.auto_buffer},
                   {"p_below", s.p_buffer_below},
                   {"p_above", s.p_buffer_above},
                   {"x", s.x_buffer}};
    return j;
}

/// Accepts either a full spec or {"builtin": name, "params": [...]} with
/// optional "horizon" / "sigma" overrides.
inline ProblemSpec problem_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("problem: expected an object");
    if (j.contains("builtin")) {
        ProblemSpec s = builtin_catalog(j.at("builtin").get<std::string>(), j.value("params", std::vector<double>{}));
        if (j.contains("horizon")) set_horizon(s, j.at("horizon").get<double>());
        check_well_formed(s);
        return s;
    }
    ProblemSpec s;
    s.name = j.value("name", std::string("custom"));
    s.d = j.at("d").get<std::size_t>();
    s.m = j.at("m").get<std::size_t>();
    s.omega = detail::box_from_json(j.at("omega"), "omega");
    s.omega_is_truncation = j.value("omega_is_truncation", false);
    s.p_box = detail::box_from_json(j.at("p_box"), "p_box");
    s.u_box = j.contains("u_box") ? detail::box_from_json(j.at("u_box"), "u_box") : Box::cube(s.d, -1.0, 1.0);
    s.horizon = j.value("horizon", 1.0);
    s.sigma = j.value("sigma", 0.0);
    s.discount = j.value("discount", 0.0);
    const auto& c = j.at("coefficients");
    s.f_coef = coefficient_from_json(c.at("F"), s.d, s.d, s.m, s.d, "F");
    s.g_coef = coefficient_from_json(c.at("G"), s.d, s.d, s.m, s.d, "G");
    s.b_coef = coefficient_from_json(c.at("b"), s.m, s.d, s.m, s.d, "b");
    s.u0 = coefficient_from_json(c.at("U0"), s.d, s.d, s.m, 0, "U0");
    if (c.contains("volatility")) s.volatility = coefficient_from_json(c.at("volatility"), s.m * s.m, s.d, s.m, s.d, "volatility");
    const json buf = j.value("buffer", json::object());
    s.auto_buffer = buf.value("auto", true);
    if (s.auto_buffer) {
        finalize_buffers(s);
    } else {
        s.p_buffer_below = buf.value("p_below", std::vector<double>(s.m, 0.0));
        s.p_buffer_above = buf.value("p_above", std::vector<double>(s.m, 0.0));
        s.x_buffer = buf.value("x", std::vector<double>(s.d, 0.0));
    }
    check_well_formed(s);
    return s;
}

inline ProblemSpec load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open problem file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("problem file '" + path + "': " + e.what());
    }
    return problem_from_json(j);
}

inline void save_problem(const ProblemSpec& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write problem file '" + path + "'");
    out << problem_to_json(s).dump(2) << '\n';
}

}  // namespace mfgnoise
