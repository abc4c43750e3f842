#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cobso/autodiff.hpp"
#include "cobso/errors.hpp"
#include "cobso/nn.hpp"
#include "cobso/rng.hpp"
#include "cobso/tracking.hpp"

namespace cobso {

enum class PredictorKind { RnnGauss, Vrnn, Gvrnn, Oracle };

inline const char* to_string(PredictorKind k) {
    switch (k) {
        case PredictorKind::RnnGauss: return "rnn_gauss";
        case PredictorKind::Vrnn: return "vrnn";
        case PredictorKind::Gvrnn: return "gvrnn";
        default: return "oracle";
    }
}

inline std::optional<PredictorKind> predictor_kind_from(const std::string& s) {
    if (s == "rnn_gauss") return PredictorKind::RnnGauss;
    if (s == "vrnn") return PredictorKind::Vrnn;
    if (s == "gvrnn") return PredictorKind::Gvrnn;
    if (s == "oracle") return PredictorKind::Oracle;
    return std::nullopt;
}

struct PredictorConfig {
    PredictorKind kind = PredictorKind::Gvrnn;
    int n_agents = 23;   // 22 players + ball
    int agent_dim = 4;   // x, y, vx, vy
    int hidden = 64;
    int latent = 16;
    int msg = 32;        // GNN message width
    int mlp_hidden = 64;
    int slots = 3;       // per-agent parameter sets of the decentralized models
    double pos_scale = 52.5;
    double vel_scale = 10.0;
    // the decoder models per-step deltas; position and velocity deltas have
    // different magnitudes, so each gets its own unit
    double delta_scale = 0.02;
    double delta_scale_vel = 0.08;
    std::uint64_t init_seed = 1;

    int feature_dim() const { return n_agents * agent_dim; } // 92 for the full game state

    nlohmann::ordered_json to_json() const {
        return {{"kind", to_string(kind)},   {"n_agents", n_agents},   {"agent_dim", agent_dim},
                {"hidden", hidden},          {"latent", latent},       {"msg", msg},
                {"mlp_hidden", mlp_hidden},  {"slots", slots},         {"pos_scale", pos_scale},
                {"vel_scale", vel_scale},    {"delta_scale", delta_scale},
                {"delta_scale_vel", delta_scale_vel}, {"init_seed", init_seed}};
    }

    static PredictorConfig from_json(const nlohmann::json& j) {
        PredictorConfig c;
        auto kind = predictor_kind_from(j.at("kind").get<std::string>());
        if (!kind) throw SchemaError("predictor config: unknown kind");
        c.kind = *kind;
        c.n_agents = j.value("n_agents", 23);
        c.agent_dim = j.value("agent_dim", 4);
        c.hidden = j.value("hidden", 64);
        c.latent = j.value("latent", 16);
        c.msg = j.value("msg", 32);
        c.mlp_hidden = j.value("mlp_hidden", 64);
        c.slots = j.value("slots", 3);
        c.pos_scale = j.value("pos_scale", 52.5);
        c.vel_scale = j.value("vel_scale", 10.0);
        c.delta_scale = j.value("delta_scale", 0.02);
        c.delta_scale_vel = j.value("delta_scale_vel", 0.08);
        c.init_seed = j.value("init_seed", std::uint64_t(1));
        return c;
    }
};

// ---- Feature encoding -------------------------------------------------------

/// Node features for one frame: players in frame order, ball last.
/// Normalized to roughly unit scale.
inline ad::Mat frame_nodes(const Frame& frame, const PredictorConfig& cfg) {
    const int k = int(frame.players.size()) + 1;
    if (k != cfg.n_agents)
        throw ContractError("frame_nodes: frame has " + std::to_string(k) + " agents, model expects " +
                            std::to_string(cfg.n_agents));
    ad::Mat m(k, cfg.agent_dim);
    for (int i = 0; i < k - 1; ++i) {
        const auto& p = frame.players[size_t(i)];
        m(i, 0) = p.pos.x / cfg.pos_scale;
        m(i, 1) = p.pos.y / cfg.pos_scale;
        m(i, 2) = p.vel.x / cfg.vel_scale;
        m(i, 3) = p.vel.y / cfg.vel_scale;
    }
    m(k - 1, 0) = frame.ball.pos.x / cfg.pos_scale;
    m(k - 1, 1) = frame.ball.pos.y / cfg.pos_scale;
    m(k - 1, 2) = frame.ball.vel.x / cfg.vel_scale;
    m(k - 1, 3) = frame.ball.vel.y / cfg.vel_scale;
    return m;
}

/// Per-column delta units for [x, y, vx, vy] node rows, tiled to `rows`.
inline ad::Mat delta_units(const PredictorConfig& cfg, int rows) {
    ad::Mat m(rows, cfg.agent_dim);
    for (int j = 0; j < cfg.agent_dim; ++j)
        m.col(j).setConstant(j < 2 ? cfg.delta_scale : cfg.delta_scale_vel);
    return m;
}

inline ad::Mat delta_target(const PredictorConfig& cfg, const ad::Mat& now, const ad::Mat& prev) {
    ad::Mat y = now - prev;
    for (int j = 0; j < int(y.cols()); ++j)
        y.col(j) /= j < 2 ? cfg.delta_scale : cfg.delta_scale_vel;
    return y;
}

inline void apply_node_row(Frame& frame, int node, const ad::Mat& rows, int row,
                           const PredictorConfig& cfg) {
    Vec2 pos{rows(row, 0) * cfg.pos_scale, rows(row, 1) * cfg.pos_scale};
    Vec2 vel{rows(row, 2) * cfg.vel_scale, rows(row, 3) * cfg.vel_scale};
    if (node < int(frame.players.size())) {
        frame.players[size_t(node)].pos = pos;
        frame.players[size_t(node)].vel = vel;
    } else {
        frame.ball.pos = pos;
        frame.ball.vel = vel;
    }
}

// ---- Graph message passing --------------------------------------------------

/// Fully connected graph minus self-loops over `batch` stacked copies of
/// `n_nodes` agents. `recv` is the receiving node of each directed edge.
struct EdgeIndex {
    std::vector<int> recv, nbr;
    int rows = 0; // batch * n_nodes

    static EdgeIndex fully_connected(int n_nodes, int batch = 1) {
        EdgeIndex e;
        e.rows = n_nodes * batch;
        e.recv.reserve(size_t(batch) * n_nodes * (n_nodes - 1));
        e.nbr.reserve(e.recv.capacity());
        for (int b = 0; b < batch; ++b)
            for (int k = 0; k < n_nodes; ++k)
                for (int j = 0; j < n_nodes; ++j) {
                    if (j == k) continue;
                    e.recv.push_back(b * n_nodes + k);
                    e.nbr.push_back(b * n_nodes + j);
                }
        return e;
    }
};

/// Edge and node networks of one graph block.
struct GnnBlock {
    nn::Mlp f_e, f_v;

    GnnBlock() = default;
    GnnBlock(const std::string& name, int node_in, int msg, int mlp_hidden, int node_out, Rng& rng,
             bool zero_out = false)
        : f_e(name + ".f_e", 2 * node_in, mlp_hidden, msg, rng),
          f_v(name + ".f_v", msg, mlp_hidden, node_out, rng, zero_out) {}

    void collect(std::vector<ad::Param*>& out) {
        f_e.collect(out);
        f_v.collect(out);
    }
};

struct BoundGnn {
    nn::BoundMlp f_e, f_v;
};

inline BoundGnn bind(ad::Tape& t, GnnBlock& g) { return {bind(t, g.f_e), bind(t, g.f_v)}; }

/// One round of message passing: e_(k,j) = f_e([v_k, v_j]) over every
/// directed edge, o_k = f_v(sum of incoming messages). Permutation
/// equivariant; an empty neighborhood yields o = f_v(0).
inline ad::Var gnn_pass(ad::Tape& t, const BoundGnn& g, ad::Var nodes, const EdgeIndex& edges) {
    if (t.rows(nodes) != edges.rows)
        throw ContractError("gnn_pass: node row count does not match edge index");
    ad::Var vk = gather_rows(t, nodes, edges.recv);
    ad::Var vj = gather_rows(t, nodes, edges.nbr);
    ad::Var msgs = apply(t, g.f_e, concat_cols(t, vk, vj));
    ad::Var agg = scatter_sum_rows(t, msgs, edges.recv, edges.rows);
    return apply(t, g.f_v, agg);
}

// ---- Models -----------------------------------------------------------------

/// Decoder log-sigma offset: raw zero-initialized heads start as a sharp
/// persistence predictor rather than a unit-variance one.
inline constexpr double kDecLogSigmaOffset = -2.0;

struct VrnnSlot {
    nn::Mlp prior, enc, dec;
    nn::GruCell rnn;

    void collect(std::vector<ad::Param*>& out) {
        prior.collect(out);
        enc.collect(out);
        dec.collect(out);
        rnn.collect(out);
    }
};

struct RnnSlot {
    nn::Mlp head;
    nn::GruCell rnn;

    void collect(std::vector<ad::Param*>& out) {
        head.collect(out);
        rnn.collect(out);
    }
};

/// Trajectory model; which members are populated depends on `kind`.
struct PredictorModel {
    PredictorConfig config;

    // gvrnn (centralized, parameters shared across agents)
    GnnBlock pri, enc, dec;
    nn::GruCell rnn;

    // vrnn / rnn_gauss (decentralized, one parameter set per predicted slot)
    std::vector<VrnnSlot> vrnn_slots;
    std::vector<RnnSlot> rnn_slots;

    static PredictorModel make(const PredictorConfig& cfg) {
        PredictorModel m;
        m.config = cfg;
        Rng rng(cfg.init_seed);
        const int d = cfg.agent_dim;
        const int f = cfg.feature_dim();
        switch (cfg.kind) {
            case PredictorKind::Gvrnn:
                m.pri = GnnBlock("pri", cfg.hidden, cfg.msg, cfg.mlp_hidden, 2 * cfg.latent, rng,
                                 true);
                m.enc = GnnBlock("enc", d + cfg.hidden, cfg.msg, cfg.mlp_hidden, 2 * cfg.latent, rng,
                                 true);
                m.dec = GnnBlock("dec", cfg.latent + cfg.hidden, cfg.msg, cfg.mlp_hidden, 2 * d, rng,
                                 true);
                m.rnn = nn::GruCell("rnn", d + cfg.latent, cfg.hidden, rng);
                break;
            case PredictorKind::Vrnn:
                // decentralized: each slot sees only its own agent's state
                for (int s = 0; s < cfg.slots; ++s) {
                    const std::string base = "slot" + std::to_string(s);
                    VrnnSlot slot;
                    slot.prior = nn::Mlp(base + ".prior", cfg.hidden, cfg.mlp_hidden, 2 * cfg.latent,
                                         rng, true);
                    slot.enc = nn::Mlp(base + ".enc", d + cfg.hidden, cfg.mlp_hidden, 2 * cfg.latent,
                                       rng, true);
                    slot.dec = nn::Mlp(base + ".dec", cfg.latent + cfg.hidden, cfg.mlp_hidden, 2 * d,
                                       rng, true);
                    slot.rnn = nn::GruCell(base + ".rnn", d + cfg.latent, cfg.hidden, rng);
                    m.vrnn_slots.push_back(std::move(slot));
                }
                break;
            case PredictorKind::RnnGauss:
                for (int s = 0; s < cfg.slots; ++s) {
                    const std::string base = "slot" + std::to_string(s);
                    RnnSlot slot;
                    slot.head = nn::Mlp(base + ".head", cfg.hidden, cfg.mlp_hidden, 2 * d, rng, true);
                    slot.rnn = nn::GruCell(base + ".rnn", d, cfg.hidden, rng);
                    m.rnn_slots.push_back(std::move(slot));
                }
                break;
            case PredictorKind::Oracle:
                break;
        }
        return m;
    }

    std::vector<ad::Param*> params() {
        std::vector<ad::Param*> out;
        if (config.kind == PredictorKind::Gvrnn) {
            pri.collect(out);
            enc.collect(out);
            dec.collect(out);
            rnn.collect(out);
        }
        for (auto& s : vrnn_slots) s.collect(out);
        for (auto& s : rnn_slots) s.collect(out);
        return out;
    }

    nlohmann::ordered_json to_checkpoint() {
        return nn::checkpoint_json(to_string(config.kind), config.to_json(), params());
    }

    static PredictorModel from_checkpoint(const nlohmann::json& j) {
        PredictorConfig cfg = PredictorConfig::from_json(j.at("hyperparameters"));
        PredictorModel m = make(cfg);
        nn::load_params_json(j, m.params());
        return m;
    }
};

// ---- Step functions ---------------------------------------------------------

struct BoundGvrnn {
    BoundGnn pri, enc, dec;
    nn::BoundGru rnn;
    EdgeIndex edges;
};

inline BoundGvrnn bind_gvrnn(ad::Tape& t, PredictorModel& m, int batch) {
    if (m.config.kind != PredictorKind::Gvrnn)
        throw ContractError("bind_gvrnn: model kind is not gvrnn");
    return {bind(t, m.pri), bind(t, m.enc), bind(t, m.dec), bind(t, m.rnn),
            EdgeIndex::fully_connected(m.config.n_agents, batch)};
}

enum class StepMode { Infer, Generate };

struct GvrnnStep {
    ad::Var z;
    nn::GaussianHead prior;
    nn::GaussianHead posterior; // valid in Infer mode only
    nn::GaussianHead dec;       // heads over the per-step delta, in delta_scale units
    ad::Var x_hat;              // decoded mean state: x_prev + delta_scale * dec.mu
    ad::Var h;
    bool has_posterior = false;
};

/// One GVRNN update. In Infer mode z is sampled from the encoder given the
/// observed frame `x_obs`; in Generate mode z comes from the prior and the
/// decoded mean feeds the recurrence. The decoder models the scaled step
/// delta from `x_prev`, so a zero-initialized decoder is a persistence
/// predictor.
inline GvrnnStep gvrnn_step(ad::Tape& t, const BoundGvrnn& b, const PredictorConfig& cfg,
                            std::optional<ad::Var> x_obs, ad::Var x_prev, ad::Var h_prev,
                            StepMode mode, Rng& rng) {
    GvrnnStep out;
    out.prior = nn::split_head(t, gnn_pass(t, b.pri, h_prev, b.edges));
    if (mode == StepMode::Infer) {
        if (!x_obs) throw ContractError("gvrnn_step: infer mode requires an observed frame");
        out.posterior = nn::split_head(t, gnn_pass(t, b.enc, concat_cols(t, *x_obs, h_prev), b.edges));
        out.has_posterior = true;
        out.z = reparam_sample(t, out.posterior, rng);
    } else {
        out.z = reparam_sample(t, out.prior, rng);
    }
    nn::GaussianHead raw =
        nn::split_head(t, gnn_pass(t, b.dec, concat_cols(t, out.z, h_prev), b.edges));
    out.dec = {raw.mu, add_scalar(t, raw.log_sigma, kDecLogSigmaOffset)};
    out.x_hat = add(t, x_prev, hadamard(t, out.dec.mu, t.constant(delta_units(cfg, t.rows(raw.mu)))));
    ad::Var x_rec = mode == StepMode::Infer ? *x_obs : out.x_hat;
    out.h = nn::gru_step(t, b.rnn, concat_cols(t, x_rec, out.z), h_prev);
    return out;
}

// ---- Training ---------------------------------------------------------------

/// One preprocessed training (or evaluation) item: normalized node features
/// per frame plus the indices of the agents whose loss counts.
struct TrainingSample {
    std::vector<ad::Mat> nodes;  // T frames of [n_agents x agent_dim]
    std::vector<int> predicted;  // distinct node indices
};

inline TrainingSample make_training_sample(const Sequence& seq, std::vector<int> predicted,
                                           const PredictorConfig& cfg) {
    TrainingSample s;
    s.nodes.reserve(seq.frames.size());
    for (const auto& f : seq.frames) s.nodes.push_back(frame_nodes(f, cfg));
    std::sort(predicted.begin(), predicted.end());
    predicted.erase(std::unique(predicted.begin(), predicted.end()), predicted.end());
    for (int p : predicted)
        if (p < 0 || p >= cfg.n_agents)
            throw ContractError("training sample: predicted agent index out of range");
    s.predicted = std::move(predicted);
    return s;
}

/// Predicted sets for training: for every ordered pair of attackers inside
/// the attacking third at the window start, predict the off-ball attacker,
/// the defender nearest to it and the defender nearest to the other attacker.
inline std::vector<std::vector<int>> enumerate_training_tasks(const Sequence& seq,
                                                              const PitchSpec& pitch) {
    std::vector<std::vector<int>> tasks;
    if (seq.frames.empty()) return tasks;
    const Frame& f = seq.frames.front();
    std::vector<int> third;
    const double threshold = pitch.length / 6.0;
    for (size_t i = 0; i < f.players.size(); ++i)
        if (f.players[i].team == seq.attacking && f.players[i].pos.x > threshold)
            third.push_back(int(i));
    for (int off : third)
        for (int other : third) {
            if (off == other) continue;
            std::vector<int> set{off, nearest_defender_index(f, seq.attacking, f.players[size_t(off)].pos),
                                 nearest_defender_index(f, seq.attacking, f.players[size_t(other)].pos)};
            set.erase(std::remove(set.begin(), set.end(), -1), set.end());
            tasks.push_back(std::move(set));
        }
    return tasks;
}

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 10;
    int batch = 256;
    int micro_batch = 2;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const {
        return {{"lr", lr}, {"epochs", epochs}, {"batch", batch},
                {"micro_batch", micro_batch}, {"seed", seed}};
    }
};

struct TrainReport {
    std::vector<double> train_loss; // per epoch, per predicted agent-step
    std::vector<double> val_loss;   // per epoch (empty without validation set)
};

namespace detail {

struct LossStats {
    ad::Var node;     // scaled loss for backward
    double value = 0; // unscaled sum
    double denom = 0; // predicted agent-steps
};

inline ad::Mat stack_nodes(const std::vector<const TrainingSample*>& batch, size_t t, int k) {
    ad::Mat out(int(batch.size()) * k, batch[0]->nodes[0].cols());
    for (size_t b = 0; b < batch.size(); ++b) out.middleRows(int(b) * k, k) = batch[b]->nodes[t];
    return out;
}

inline std::vector<double> node_mask(const std::vector<const TrainingSample*>& batch, int k) {
    std::vector<double> w(batch.size() * size_t(k), 0.0);
    for (size_t b = 0; b < batch.size(); ++b)
        for (int p : batch[b]->predicted) w[b * size_t(k) + size_t(p)] = 1.0;
    return w;
}

/// Negative sequential ELBO of a GVRNN over one micro-batch, masked to the
/// predicted agents.
inline LossStats gvrnn_loss(ad::Tape& t, PredictorModel& m,
                            const std::vector<const TrainingSample*>& batch, double grad_scale,
                            Rng& rng) {
    const auto& cfg = m.config;
    const int k = cfg.n_agents;
    const int bk = int(batch.size()) * k;
    const size_t frames = batch[0]->nodes.size();
    BoundGvrnn bound = bind_gvrnn(t, m, int(batch.size()));
    const std::vector<double> mask = node_mask(batch, k);

    ad::Var h = t.constant(ad::Mat::Zero(bk, cfg.hidden));
    ad::Var x_prev = t.constant(stack_nodes(batch, 0, k));
    {
        nn::GaussianHead q =
            nn::split_head(t, gnn_pass(t, bound.enc, concat_cols(t, x_prev, h), bound.edges));
        ad::Var z = reparam_sample(t, q, rng);
        h = nn::gru_step(t, bound.rnn, concat_cols(t, x_prev, z), h);
    }
    std::optional<ad::Var> loss;
    ad::Mat prev_values = stack_nodes(batch, 0, k);
    for (size_t ft = 1; ft < frames; ++ft) {
        ad::Mat x_now = stack_nodes(batch, ft, k);
        ad::Var x_obs = t.constant(x_now);
        GvrnnStep step = gvrnn_step(t, bound, cfg, x_obs, x_prev, h, StepMode::Infer, rng);
        const ad::Mat target = delta_target(cfg, x_now, prev_values);
        ad::Var nll = gaussian_nll(t, step.dec, target, &mask);
        ad::Var kl = kl_diag_gaussians(t, step.posterior, step.prior, &mask);
        ad::Var term = add(t, nll, kl);
        loss = loss ? add(t, *loss, term) : term;
        h = step.h;
        x_prev = x_obs;
        prev_values = x_now;
    }
    double n_pred = 0;
    for (double w : mask) n_pred += w;
    LossStats out;
    out.value = t.value(*loss)(0, 0);
    out.denom = n_pred * double(frames - 1);
    out.node = scale(t, *loss, grad_scale);
    return out;
}

/// Negative ELBO (vrnn) or Gaussian NLL (rnn_gauss) of the decentralized
/// models: slot s processes the full 92-dim state and predicts its own agent.
inline LossStats decentralized_loss(ad::Tape& t, PredictorModel& m,
                                    const std::vector<const TrainingSample*>& batch,
                                    double grad_scale, Rng& rng) {
    const auto& cfg = m.config;
    const int k = cfg.n_agents;
    const int d = cfg.agent_dim;
    const int bsz = int(batch.size());
    const size_t frames = batch[0]->nodes.size();
    const bool variational = cfg.kind == PredictorKind::Vrnn;
    (void)k;

    std::optional<ad::Var> loss;
    double denom = 0;
    const int n_slots = variational ? int(m.vrnn_slots.size()) : int(m.rnn_slots.size());
    for (int s = 0; s < n_slots; ++s) {
        // slot weight per sequence and the slot's own-agent rows
        std::vector<double> w(size_t(bsz), 0.0);
        std::vector<ad::Mat> own(frames, ad::Mat(bsz, d));
        for (int b = 0; b < bsz; ++b) {
            const auto& pred = batch[size_t(b)]->predicted;
            if (s < int(pred.size())) {
                w[size_t(b)] = 1.0;
                for (size_t ft = 0; ft < frames; ++ft)
                    own[ft].row(b) = batch[size_t(b)]->nodes[ft].row(pred[size_t(s)]);
            } else {
                for (size_t ft = 0; ft < frames; ++ft) own[ft].row(b).setZero();
            }
            denom += w[size_t(b)] * double(frames - 1);
        }

        ad::Var h = t.constant(ad::Mat::Zero(bsz, cfg.hidden));
        if (variational) {
            VrnnSlot& slot = m.vrnn_slots[size_t(s)];
            nn::BoundMlp prior = bind(t, slot.prior), enc = bind(t, slot.enc), dec = bind(t, slot.dec);
            nn::BoundGru rnn = bind(t, slot.rnn);
            {
                ad::Var x0 = t.constant(own[0]);
                nn::GaussianHead q = nn::split_head(t, apply(t, enc, concat_cols(t, x0, h)));
                ad::Var z = reparam_sample(t, q, rng);
                h = nn::gru_step(t, rnn, concat_cols(t, x0, z), h);
            }
            for (size_t ft = 1; ft < frames; ++ft) {
                ad::Var x_obs = t.constant(own[ft]);
                nn::GaussianHead p = nn::split_head(t, apply(t, prior, h));
                nn::GaussianHead q = nn::split_head(t, apply(t, enc, concat_cols(t, x_obs, h)));
                ad::Var z = reparam_sample(t, q, rng);
                nn::GaussianHead raw = nn::split_head(t, apply(t, dec, concat_cols(t, z, h)));
                nn::GaussianHead head{raw.mu, add_scalar(t, raw.log_sigma, kDecLogSigmaOffset)};
                const ad::Mat target = delta_target(cfg, own[ft], own[ft - 1]);
                ad::Var term = add(t, gaussian_nll(t, head, target, &w),
                                   kl_diag_gaussians(t, q, p, &w));
                loss = loss ? add(t, *loss, term) : term;
                h = nn::gru_step(t, rnn, concat_cols(t, x_obs, z), h);
            }
        } else {
            RnnSlot& slot = m.rnn_slots[size_t(s)];
            nn::BoundMlp head_mlp = bind(t, slot.head);
            nn::BoundGru rnn = bind(t, slot.rnn);
            h = nn::gru_step(t, rnn, t.constant(own[0]), h);
            for (size_t ft = 1; ft < frames; ++ft) {
                nn::GaussianHead raw = nn::split_head(t, apply(t, head_mlp, h));
                nn::GaussianHead head{raw.mu, add_scalar(t, raw.log_sigma, kDecLogSigmaOffset)};
                const ad::Mat target = delta_target(cfg, own[ft], own[ft - 1]);
                ad::Var term = gaussian_nll(t, head, target, &w);
                loss = loss ? add(t, *loss, term) : term;
                h = nn::gru_step(t, rnn, t.constant(own[ft]), h);
            }
        }
    }
    LossStats out;
    out.value = t.value(*loss)(0, 0);
    out.denom = denom;
    out.node = scale(t, *loss, grad_scale);
    return out;
}

inline LossStats batch_loss(ad::Tape& t, PredictorModel& m,
                            const std::vector<const TrainingSample*>& batch, double grad_scale,
                            Rng& rng) {
    return m.config.kind == PredictorKind::Gvrnn ? gvrnn_loss(t, m, batch, grad_scale, rng)
                                                 : decentralized_loss(t, m, batch, grad_scale, rng);
}

} // namespace detail

/// Mean loss per predicted agent-step over a dataset, without touching
/// parameters. For the variational models this is the negative sequential
/// ELBO; for rnn_gauss the Gaussian NLL.
inline double evaluate_loss(PredictorModel& model, const std::vector<TrainingSample>& data,
                            int micro_batch, Rng& rng) {
    if (data.empty()) throw ContractError("evaluate_loss: empty dataset");
    ad::Tape tape;
    double total = 0, denom = 0;
    for (size_t i = 0; i < data.size(); i += size_t(micro_batch)) {
        std::vector<const TrainingSample*> batch;
        for (size_t b = i; b < std::min(data.size(), i + size_t(micro_batch)); ++b)
            batch.push_back(&data[b]);
        tape.clear();
        auto stats = detail::batch_loss(tape, model, batch, 1.0, rng);
        total += stats.value;
        denom += stats.denom;
    }
    return total / denom;
}

/// Teacher-forced training: negative sequential ELBO (vrnn/gvrnn) or Gaussian
/// NLL (rnn_gauss), Adam, gradient accumulation up to `batch` sequences per
/// step. Deterministic under a fixed seed. All samples must share the frame
/// count and agent count.
inline TrainReport train(PredictorModel& model, const std::vector<TrainingSample>& train_set,
                         const std::vector<TrainingSample>& val_set, const TrainConfig& cfg) {
    if (model.config.kind == PredictorKind::Oracle)
        throw ContractError("train: the oracle predictor has no trainable parameters");
    if (train_set.empty()) throw ContractError("train: empty dataset");
    const size_t frames = train_set.front().nodes.size();
    for (const auto& s : train_set)
        if (s.nodes.size() != frames)
            throw ContractError("train: all training samples must share the frame count");

    std::vector<ad::Param*> params = model.params();
    ad::Adam opt(cfg.lr);
    Rng rng(derive_seed(cfg.seed, 0xA11));
    TrainReport report;

    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    ad::Tape tape;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the run RNG
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.below(i))]);

        double epoch_loss = 0, epoch_denom = 0;
        size_t pos = 0;
        while (pos < order.size()) {
            const size_t batch_end = std::min(order.size(), pos + size_t(cfg.batch));
            const double batch_n = double(batch_end - pos);
            for (ad::Param* p : params) p->zero_grad();
            while (pos < batch_end) {
                std::vector<const TrainingSample*> micro;
                for (; pos < batch_end && micro.size() < size_t(cfg.micro_batch); ++pos)
                    micro.push_back(&train_set[order[pos]]);
                tape.clear();
                auto stats = detail::batch_loss(tape, model, micro, 1.0 / batch_n, rng);
                tape.backward(stats.node);
                epoch_loss += stats.value;
                epoch_denom += stats.denom;
            }
            opt.step(params);
        }
        report.train_loss.push_back(epoch_loss / epoch_denom);
        if (!val_set.empty()) {
            Rng val_rng(derive_seed(cfg.seed, 0xE7A1 + std::uint64_t(epoch)));
            report.val_loss.push_back(evaluate_loss(model, val_set, cfg.micro_batch, val_rng));
        }
    }
    return report;
}

// ---- Rollout ----------------------------------------------------------------

/// Counterfactual rollout request: observed burn-in, generative horizon,
/// sample count. The sequence must cover burn_in + horizon at its own rate.
struct PredictionTask {
    Sequence seq;                     // canonical orientation, model rate
    std::vector<int> predicted_nodes; // player indices in frame order
    double burn_in = 2.0;
    double horizon = 4.0;
    int samples = 10;
    double output_hz = 25.0; // 0 keeps the model rate
};

namespace detail {

struct RolloutFrames {
    size_t n_burn = 0, n_total = 0;
};

/// One sampled trajectory. Steps run on detached tapes (no gradients flow
/// across timesteps), so memory stays flat over long horizons. Returns the
/// full node matrix per horizon step with predicted rows replaced.
inline std::vector<ad::Mat> rollout_single(PredictorModel& model, const PredictionTask& task,
                                           const std::vector<ad::Mat>& obs, size_t n_burn,
                                           Rng& rng) {
    const auto& cfg = model.config;
    const int k = cfg.n_agents;
    const int d = cfg.agent_dim;
    const size_t n_total = obs.size();
    std::vector<ad::Mat> result;
    result.reserve(n_total - n_burn);
    ad::Tape tape;

    if (cfg.kind == PredictorKind::Gvrnn) {
        ad::Mat h = ad::Mat::Zero(k, cfg.hidden);
        for (size_t t = 0; t < n_burn; ++t) {
            tape.clear();
            BoundGvrnn b = bind_gvrnn(tape, model, 1);
            ad::Var x = tape.constant(obs[t]);
            ad::Var hv = tape.constant(h);
            nn::GaussianHead q =
                nn::split_head(tape, gnn_pass(tape, b.enc, concat_cols(tape, x, hv), b.edges));
            ad::Var z = reparam_sample(tape, q, rng);
            h = tape.value(nn::gru_step(tape, b.rnn, concat_cols(tape, x, z), hv));
        }
        ad::Mat x_prev = obs[n_burn - 1];
        for (size_t t = n_burn; t < n_total; ++t) {
            tape.clear();
            BoundGvrnn b = bind_gvrnn(tape, model, 1);
            ad::Var hv = tape.constant(h);
            nn::GaussianHead prior = nn::split_head(tape, gnn_pass(tape, b.pri, hv, b.edges));
            ad::Var z = reparam_sample(tape, prior, rng);
            nn::GaussianHead raw =
                nn::split_head(tape, gnn_pass(tape, b.dec, concat_cols(tape, z, hv), b.edges));
            ad::Mat mu = x_prev + delta_units(cfg, k).cwiseProduct(tape.value(raw.mu));
            ad::Mat x_now = obs[t];
            for (int node : task.predicted_nodes) x_now.row(node) = mu.row(node);
            result.push_back(x_now);
            h = tape.value(
                nn::gru_step(tape, b.rnn, concat_cols(tape, tape.constant(x_now), z), hv));
            x_prev = x_now;
        }
        return result;
    }

    // decentralized kinds: slot s predicts task.predicted_nodes[s]
    const bool variational = cfg.kind == PredictorKind::Vrnn;
    const size_t n_slots = variational ? model.vrnn_slots.size() : model.rnn_slots.size();
    if (task.predicted_nodes.size() > n_slots)
        throw ContractError("rollout: more predicted agents than model slots");
    const size_t used = task.predicted_nodes.size();

    (void)d;
    std::vector<ad::Mat> h(used, ad::Mat::Zero(1, cfg.hidden));
    for (size_t t = 0; t < n_burn; ++t) {
        for (size_t s = 0; s < used; ++s) {
            tape.clear();
            ad::Var x = tape.constant(obs[t].row(task.predicted_nodes[s]));
            ad::Var hv = tape.constant(h[s]);
            if (variational) {
                VrnnSlot& slot = model.vrnn_slots[s];
                nn::BoundMlp enc = bind(tape, slot.enc);
                nn::BoundGru rnn = bind(tape, slot.rnn);
                nn::GaussianHead q = nn::split_head(tape, apply(tape, enc, concat_cols(tape, x, hv)));
                ad::Var z = reparam_sample(tape, q, rng);
                h[s] = tape.value(nn::gru_step(tape, rnn, concat_cols(tape, x, z), hv));
            } else {
                RnnSlot& slot = model.rnn_slots[s];
                nn::BoundGru rnn = bind(tape, slot.rnn);
                h[s] = tape.value(nn::gru_step(tape, rnn, x, hv));
            }
        }
    }

    ad::Mat x_prev = obs[n_burn - 1];
    for (size_t t = n_burn; t < n_total; ++t) {
        ad::Mat x_now = obs[t];
        std::vector<ad::Mat> z_vals(used);
        for (size_t s = 0; s < used; ++s) {
            const int node = task.predicted_nodes[s];
            tape.clear();
            ad::Var hv = tape.constant(h[s]);
            ad::Mat own_prev = x_prev.row(node);
            if (variational) {
                VrnnSlot& slot = model.vrnn_slots[s];
                nn::BoundMlp prior = bind(tape, slot.prior), dec = bind(tape, slot.dec);
                nn::GaussianHead p = nn::split_head(tape, apply(tape, prior, hv));
                ad::Var z = reparam_sample(tape, p, rng);
                z_vals[s] = tape.value(z);
                nn::GaussianHead raw =
                    nn::split_head(tape, apply(tape, dec, concat_cols(tape, z, hv)));
                x_now.row(node) = own_prev + delta_units(cfg, 1).cwiseProduct(tape.value(raw.mu));
            } else {
                RnnSlot& slot = model.rnn_slots[s];
                nn::BoundMlp head = bind(tape, slot.head);
                nn::GaussianHead raw = nn::split_head(tape, apply(tape, head, hv));
                x_now.row(node) = own_prev + delta_units(cfg, 1).cwiseProduct(tape.value(raw.mu));
            }
        }
        result.push_back(x_now);
        for (size_t s = 0; s < used; ++s) {
            tape.clear();
            ad::Var x = tape.constant(x_now.row(task.predicted_nodes[s]));
            ad::Var hv = tape.constant(h[s]);
            if (variational) {
                VrnnSlot& slot = model.vrnn_slots[s];
                nn::BoundGru rnn = bind(tape, slot.rnn);
                h[s] = tape.value(nn::gru_step(
                    tape, rnn, concat_cols(tape, x, tape.constant(z_vals[s])), hv));
            } else {
                RnnSlot& slot = model.rnn_slots[s];
                nn::BoundGru rnn = bind(tape, slot.rnn);
                h[s] = tape.value(nn::gru_step(tape, rnn, x, hv));
            }
        }
        x_prev = x_now;
    }
    return result;
}

inline RolloutFrames rollout_extent(const PredictionTask& task) {
    // burn-in covers [0, burn_in] inclusive; the horizon spans (burn_in,
    // burn_in + horizon], so the window holds burn+horizon seconds exactly.
    RolloutFrames r;
    r.n_burn = size_t(std::lround(task.burn_in * task.seq.rate_hz)) + 1;
    const size_t n_hor = size_t(std::lround(task.horizon * task.seq.rate_hz));
    r.n_total = r.n_burn + n_hor;
    if (r.n_burn < 1) throw ContractError("rollout: burn-in must cover at least one frame");
    if (r.n_total > task.seq.frames.size())
        throw ContractError("rollout: horizon exceeds available conditioning data (" +
                            std::to_string(r.n_total) + " frames needed, " +
                            std::to_string(task.seq.frames.size()) + " available)");
    return r;
}

} // namespace detail

/// Predict the task's agents over the horizon: burn-in consumed in infer
/// mode, horizon generated from the prior with predicted agents feeding back
/// their own outputs and everyone else teacher-forced from the observed
/// frames. Returns the observed window with predicted agents replaced by the
/// per-timestep mean over `samples` rollouts.
inline Sequence rollout(PredictorModel& model, const PredictionTask& task, std::uint64_t seed) {
    const auto ext = detail::rollout_extent(task);
    const auto& cfg = model.config;

    Sequence out = task.seq;
    out.frames.assign(task.seq.frames.begin(), task.seq.frames.begin() + long(ext.n_total));

    if (cfg.kind != PredictorKind::Oracle && ext.n_total > ext.n_burn) {
        for (int node : task.predicted_nodes)
            if (node < 0 || node >= cfg.n_agents - 1)
                throw ContractError("rollout: predicted node out of range");

        std::vector<ad::Mat> obs(ext.n_total);
        for (size_t i = 0; i < ext.n_total; ++i) obs[i] = frame_nodes(task.seq.frames[i], cfg);

        const size_t n_hor = ext.n_total - ext.n_burn;
        std::vector<ad::Mat> mean(n_hor, ad::Mat::Zero(cfg.n_agents, cfg.agent_dim));

        for (int sample = 0; sample < task.samples; ++sample) {
            Rng rng(derive_seed(seed, std::uint64_t(sample)));
            std::vector<ad::Mat> pred = detail::rollout_single(model, task, obs, ext.n_burn, rng);
            for (size_t i = 0; i < n_hor; ++i) mean[i] += pred[i];
        }
        for (auto& m : mean) m /= double(task.samples);

        for (size_t i = 0; i < n_hor; ++i)
            for (int node : task.predicted_nodes)
                apply_node_row(out.frames[ext.n_burn + i], node, mean[i], node, cfg);
    }

    if (task.output_hz > 0.0 && std::abs(task.output_hz - out.rate_hz) > 1e-9)
        out = resample(out, task.output_hz);
    return out;
}

/// Mean final-position error over the given player ids between two aligned
/// sequences.
inline double endpoint_error(const Sequence& predicted, const Sequence& actual,
                             const std::vector<int>& player_ids) {
    if (predicted.frames.size() != actual.frames.size() || predicted.frames.empty())
        throw ContractError("endpoint_error: sequences are not aligned");
    if (std::abs(predicted.frames.back().t - actual.frames.back().t) > 1e-9)
        throw ContractError("endpoint_error: sequences end at different times");
    if (player_ids.empty()) throw ContractError("endpoint_error: no players given");
    const Frame& fp = predicted.frames.back();
    const Frame& fa = actual.frames.back();
    double acc = 0.0;
    for (int id : player_ids) {
        const PlayerState* pp = fp.find_player(id);
        const PlayerState* pa = fa.find_player(id);
        if (!pp || !pa) throw ContractError("endpoint_error: player id not present in both");
        acc += distance(pp->pos, pa->pos);
    }
    return acc / double(player_ids.size());
}

} // namespace cobso
