#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cobso/autodiff.hpp"
#include "cobso/errors.hpp"
#include "cobso/rng.hpp"

namespace cobso::nn {

using ad::GaussianHead;
using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

inline void glorot_init(Param& p, Rng& rng) {
    const double bound = std::sqrt(6.0 / double(p.value.rows() + p.value.cols()));
    for (long i = 0; i < p.value.rows(); ++i)
        for (long j = 0; j < p.value.cols(); ++j) p.value(i, j) = rng.uniform(-bound, bound);
}

/// Affine layer; weights [in x out], bias [1 x out].
struct Dense {
    Param W, b;

    Dense() = default;
    Dense(const std::string& name, int in, int out, Rng& rng, bool zero_init = false)
        : W(name + ".W", in, out), b(name + ".b", 1, out) {
        if (!zero_init) glorot_init(W, rng);
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&W);
        out.push_back(&b);
    }
};

struct BoundDense {
    Var W, b;
};

inline BoundDense bind(Tape& t, Dense& d) { return {t.leaf(d.W), t.leaf(d.b)}; }

inline Var apply(Tape& t, const BoundDense& d, Var x) {
    return add_bias(t, matmul(t, x, d.W), d.b);
}

/// Two-layer perceptron with tanh hidden activation.
struct Mlp {
    Dense l1, l2;

    Mlp() = default;
    Mlp(const std::string& name, int in, int hidden, int out, Rng& rng, bool zero_out = false)
        : l1(name + ".l1", in, hidden, rng), l2(name + ".l2", hidden, out, rng, zero_out) {}

    void collect(std::vector<Param*>& out) {
        l1.collect(out);
        l2.collect(out);
    }
};

struct BoundMlp {
    BoundDense l1, l2;
};

inline BoundMlp bind(Tape& t, Mlp& m) { return {bind(t, m.l1), bind(t, m.l2)}; }

inline Var apply(Tape& t, const BoundMlp& m, Var x) {
    return apply(t, m.l2, tanh_(t, apply(t, m.l1, x)));
}

/// Gated recurrent cell. Hidden state stays in (-1, 1) per unit when started
/// from zeros.
struct GruCell {
    Dense zx, zh, rx, rh, hx, hh;

    GruCell() = default;
    GruCell(const std::string& name, int in, int hidden, Rng& rng)
        : zx(name + ".zx", in, hidden, rng),
          zh(name + ".zh", hidden, hidden, rng),
          rx(name + ".rx", in, hidden, rng),
          rh(name + ".rh", hidden, hidden, rng),
          hx(name + ".hx", in, hidden, rng),
          hh(name + ".hh", hidden, hidden, rng) {}

    void collect(std::vector<Param*>& out) {
        zx.collect(out);
        zh.collect(out);
        rx.collect(out);
        rh.collect(out);
        hx.collect(out);
        hh.collect(out);
    }
};

struct BoundGru {
    BoundDense zx, zh, rx, rh, hx, hh;
};

inline BoundGru bind(Tape& t, GruCell& g) {
    return {bind(t, g.zx), bind(t, g.zh), bind(t, g.rx),
            bind(t, g.rh), bind(t, g.hx), bind(t, g.hh)};
}

/// h' = (1-z) o h + z o tanh(Wh x + Uh (r o h) + bh), gates z, r sigmoid.
inline Var gru_step(Tape& t, const BoundGru& g, Var x, Var h_prev) {
    if (t.rows(x) != t.rows(h_prev))
        throw ContractError("gru_step: batch rows of x and h differ");
    Var z = sigmoid(t, add(t, apply(t, g.zx, x), apply(t, g.zh, h_prev)));
    Var r = sigmoid(t, add(t, apply(t, g.rx, x), apply(t, g.rh, h_prev)));
    Var cand = tanh_(t, add(t, apply(t, g.hx, x), apply(t, g.hh, hadamard(t, r, h_prev))));
    Var one_minus_z = add_scalar(t, neg(t, z), 1.0);
    return add(t, hadamard(t, one_minus_z, h_prev), hadamard(t, z, cand));
}

/// Split a [rows x 2d] output into a diagonal Gaussian head.
inline GaussianHead split_head(Tape& t, Var out) {
    const int d = t.cols(out) / 2;
    if (t.cols(out) != 2 * d)
        throw ContractError("split_head: output width must be even");
    return {slice_cols(t, out, 0, d), slice_cols(t, out, d, d)};
}

// ---- Checkpoints ------------------------------------------------------------

/// Versioned parameter checkpoint (see the repo docs for the exact format).
inline nlohmann::ordered_json checkpoint_json(const std::string& kind,
                                              const nlohmann::ordered_json& hyper,
                                              std::vector<Param*> params) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["kind"] = kind;
    j["hyperparameters"] = hyper;
    nlohmann::ordered_json jp;
    for (const Param* p : params) {
        nlohmann::ordered_json entry;
        entry["shape"] = {p->value.rows(), p->value.cols()};
        std::vector<double> data(size_t(p->value.size()));
        // row-major serialization
        for (long i = 0; i < p->value.rows(); ++i)
            for (long k = 0; k < p->value.cols(); ++k)
                data[size_t(i) * size_t(p->value.cols()) + size_t(k)] = p->value(i, k);
        entry["data"] = data;
        jp[p->name] = std::move(entry);
    }
    j["parameters"] = std::move(jp);
    return j;
}

inline void load_params_json(const nlohmann::json& j, std::vector<Param*> params) {
    if (j.value("format_version", 0) != 1)
        throw SchemaError("checkpoint: unsupported format_version");
    const auto& jp = j.at("parameters");
    for (Param* p : params) {
        if (!jp.contains(p->name))
            throw SchemaError("checkpoint: missing parameter '" + p->name + "'");
        const auto& entry = jp.at(p->name);
        long rows = entry.at("shape")[0].get<long>();
        long cols = entry.at("shape")[1].get<long>();
        if (rows != p->value.rows() || cols != p->value.cols())
            throw SchemaError("checkpoint: shape mismatch for '" + p->name + "'");
        const auto& data = entry.at("data");
        if (long(data.size()) != rows * cols)
            throw SchemaError("checkpoint: data length mismatch for '" + p->name + "'");
        for (long i = 0; i < rows; ++i)
            for (long k = 0; k < cols; ++k)
                p->value(i, k) = data[size_t(i) * size_t(cols) + size_t(k)].get<double>();
    }
}

} // namespace cobso::nn
