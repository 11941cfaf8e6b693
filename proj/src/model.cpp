#include "tau/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "tau/digest.hpp"
#include "tau/errors.hpp"
#include "tau/kernels.hpp"
#include "tau/text.hpp"

namespace tau {

const char* to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

Precision precision_from_string(const std::string& s) {
    if (s == "f64") return Precision::f64;
    if (s == "f32") return Precision::f32;
    throw_config("unknown precision: " + s + " (expected f64 or f32)");
}

void LMConfig::validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || context_len < 2 ||
        vocab_size < 257) {
        throw_config("model dimensions must be positive (vocab must cover bytes and markers)");
    }
    if (d_model % n_heads != 0) throw_config("d_model must be divisible by n_heads");
    if (dropout < 0.0 || dropout >= 1.0) throw_config("dropout must lie in [0, 1)");
}

void AdapterConfig::validate() const {
    if (!enabled) return;
    if (rank < 1) throw_config("adapter rank must be >= 1");
    if (scale <= 0.0) throw_config("adapter scale must be positive");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw_config("epochs must be >= 1");
    // learning_rate == 0 is allowed as the no-update control run.
    if (learning_rate < 0.0) throw_config("learning_rate must be >= 0");
    if (batch_size < 1) throw_config("batch_size must be >= 1");
    if (lambda_func < 0.0) throw_config("lambda_func must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw_config("adam betas must lie in [0, 1)");
    }
    if (eps <= 0.0) throw_config("adam eps must be positive");
    if (weight_decay < 0.0) throw_config("weight_decay must be >= 0");
    if (grad_clip_norm <= 0.0) throw_config("grad_clip_norm must be positive");
}

std::string TrainLog::to_csv() const {
    std::string out = "step,clean_loss,func_loss,total_loss\n";
    for (const auto& s : steps) {
        out += std::to_string(s.step);
        out += ',';
        if (!std::isnan(s.clean_loss)) out += format_double(s.clean_loss);
        out += ',';
        if (!std::isnan(s.func_loss)) out += format_double(s.func_loss);
        out += ',';
        out += format_double(s.total_loss);
        out += '\n';
    }
    return out;
}

ParamFamily family_of(const std::string& name) {
    if (contains(name, "adapter")) return ParamFamily::adapter;
    if (name == "wte" || name == "wpe") return ParamFamily::embedding;
    if (contains(name, ".wq") || contains(name, ".wk") || contains(name, ".wv") ||
        contains(name, ".wo")) {
        return ParamFamily::attention;
    }
    if (contains(name, ".fc")) return ParamFamily::mlp;
    if (contains(name, "ln")) return ParamFamily::norm;
    if (name == "head") return ParamFamily::head;
    throw_config("slice name has no family: " + name);
}

SpanInfo response_span(const std::vector<std::int32_t>& ids, std::int32_t assistant_id,
                       std::int32_t newline_id) {
    std::int64_t marker = -1;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == assistant_id) {
            marker = static_cast<std::int64_t>(i);
            break;
        }
    }
    if (marker < 0) throw_validate("sequence lacks the assistant marker; nothing to supervise");
    if (marker + 1 >= static_cast<std::int64_t>(ids.size()) || ids[marker + 1] != newline_id) {
        throw_validate("assistant marker must be followed by a newline token");
    }
    SpanInfo info;
    info.response_start = marker + 2;
    info.n_supervised = static_cast<std::int64_t>(ids.size()) - info.response_start;
    if (info.n_supervised <= 0) {
        throw_validate("response span is empty; nothing to supervise");
    }
    return info;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <typename T>
struct Model<T>::Cache {
    std::int64_t rows = 0;
    struct LayerBuf {
        std::vector<T> ln1_out, ln1_mean, ln1_rstd;
        std::vector<T> q, k, v, probs, att_out, att_proj;
        std::vector<T> ln2_out, ln2_mean, ln2_rstd;
        std::vector<T> fc1_pre, fc1_act, fc2_out;
        std::vector<T> stream_attn, stream_mlp;
        std::vector<T> tmp_q, tmp_k, tmp_v, tmp_o, tmp_fc1, tmp_fc2;
        std::vector<T> drop_attn, drop_mlp;
    };
    std::vector<T> x0;
    std::vector<LayerBuf> layers;
    std::vector<T> lnf_out, lnf_mean, lnf_rstd, logits;

    // backward scratch
    std::vector<T> dlogits, row_loss, weights;
    std::vector<std::int32_t> targets;
    std::vector<T> dstream, dbranch, dln, dq, dk, dv, datt, dscore, dfc1_pre, dfc1_act, dlr_tmp;
};

template <typename T>
Model<T>::Model(LMConfig cfg, TokenizerModel tok, AdapterConfig acfg, std::uint64_t init_seed)
    : cfg_(cfg), tok_(std::move(tok)), acfg_(acfg) {
    cfg_.validate();
    acfg_.validate();
    if (cfg_.vocab_size != tok_.vocab_size()) {
        throw_config("config vocab_size " + std::to_string(cfg_.vocab_size) +
                     " does not match tokenizer vocab " + std::to_string(tok_.vocab_size()));
    }
    assistant_id_ = tok_.special_id(kAssistantMarker);
    end_id_ = tok_.special_id(kEndMarker);
    if (assistant_id_ < 0 || end_id_ < 0) {
        throw_config("tokenizer lacks the reserved role markers");
    }
    build_layout();
    init_params(init_seed);
}

template <typename T>
void Model<T>::build_layout() {
    const std::int64_t d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size;
    std::int64_t off = 0;
    auto add = [&](const std::string& name, std::int64_t rows, std::int64_t cols) {
        slices_.push_back({name, off, rows, cols});
        off += rows * cols;
        return static_cast<std::int64_t>(slices_.size()) - 1;
    };
    wte_off_ = 0;
    add("wte", v, d);
    wpe_off_ = off;
    add("wpe", cfg_.context_len, d);
    layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (std::int64_t l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "l" + std::to_string(l) + ".";
        auto& L = layers_[static_cast<std::size_t>(l)];
        L.ln1_g = off;
        add(p + "ln1_g", 1, d);
        L.ln1_b = off;
        add(p + "ln1_b", 1, d);
        L.wq = off;
        add(p + "wq", d, d);
        L.wk = off;
        add(p + "wk", d, d);
        L.wv = off;
        add(p + "wv", d, d);
        L.wo = off;
        add(p + "wo", d, d);
        L.ln2_g = off;
        add(p + "ln2_g", 1, d);
        L.ln2_b = off;
        add(p + "ln2_b", 1, d);
        L.fc1 = off;
        add(p + "fc1", ff, d);
        L.fc2 = off;
        add(p + "fc2", d, ff);
    }
    lnf_g_off_ = off;
    add("lnf_g", 1, d);
    lnf_b_off_ = off;
    add("lnf_b", 1, d);
    head_off_ = off;
    add("head", v, d);

    params_.assign(static_cast<std::size_t>(off), T(0));
    grads_.assign(static_cast<std::size_t>(off), T(0));
    m_.assign(static_cast<std::size_t>(off), T(0));
    v_.assign(static_cast<std::size_t>(off), T(0));

    if (acfg_.enabled) {
        std::int64_t aoff = 0;
        auto add_target = [&](const std::string& base, std::int64_t out, std::int64_t in) {
            AdapterTarget t;
            t.base_name = base;
            t.base_slice = -1;
            for (std::size_t i = 0; i < slices_.size(); ++i) {
                if (slices_[i].name == base) t.base_slice = static_cast<std::int64_t>(i);
            }
            t.out = out;
            t.in = in;
            t.a_off = aoff;
            adapter_slices_.push_back({base + ".adapter_a", aoff, out, acfg_.rank});
            aoff += out * acfg_.rank;
            t.b_off = aoff;
            adapter_slices_.push_back({base + ".adapter_b", aoff, acfg_.rank, in});
            aoff += acfg_.rank * in;
            adapter_targets_.push_back(t);
        };
        for (std::int64_t l = 0; l < cfg_.n_layers; ++l) {
            const std::string p = "l" + std::to_string(l) + ".";
            add_target(p + "wq", d, d);
            add_target(p + "wk", d, d);
            add_target(p + "wv", d, d);
            add_target(p + "wo", d, d);
            add_target(p + "fc1", ff, d);
            add_target(p + "fc2", d, ff);
        }
        adapter_params_.assign(static_cast<std::size_t>(aoff), T(0));
        adapter_grads_.assign(static_cast<std::size_t>(aoff), T(0));
        adapter_m_.assign(static_cast<std::size_t>(aoff), T(0));
        adapter_v_.assign(static_cast<std::size_t>(aoff), T(0));
    }
}

template <typename T>
void Model<T>::init_params(std::uint64_t seed) {
    constexpr double kInitStd = 0.08;
    Rng rng(seed);
    for (const auto& s : slices_) {
        T* p = params_.data() + s.offset;
        if (s.name.ends_with("_g")) {
            for (std::int64_t i = 0; i < s.size(); ++i) p[i] = T(1);
        } else if (s.name.ends_with("_b")) {
            for (std::int64_t i = 0; i < s.size(); ++i) p[i] = T(0);
        } else if (s.name == "wpe") {
            // sinusoidal start for the learned positions: gives usable
            // relative-offset structure from step 0 at desk-scale budgets
            constexpr double kWpeScale = 0.08;
            const std::int64_t d = s.cols;
            for (std::int64_t pos = 0; pos < s.rows; ++pos) {
                for (std::int64_t i = 0; i < d; ++i) {
                    const double angle =
                        static_cast<double>(pos) /
                        std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(d));
                    const double val = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
                    p[pos * d + i] = static_cast<T>(kWpeScale * val);
                }
            }
        } else {
            for (std::int64_t i = 0; i < s.size(); ++i) {
                p[i] = static_cast<T>(rng.normal() * kInitStd);
            }
        }
    }
    for (const auto& s : adapter_slices_) {
        T* p = adapter_params_.data() + s.offset;
        if (s.name.ends_with("adapter_b")) {
            // zero-initialized: adapters contribute exactly nothing at step 0
            for (std::int64_t i = 0; i < s.size(); ++i) p[i] = T(0);
        } else {
            for (std::int64_t i = 0; i < s.size(); ++i) {
                p[i] = static_cast<T>(rng.normal() * kInitStd);
            }
        }
    }
}

template <typename T>
const Slice& Model<T>::slice(const std::string& name) const {
    for (const auto& s : slices_) {
        if (s.name == name) return s;
    }
    throw_config("unknown slice: " + name);
}

template <typename T>
std::int64_t Model<T>::slice_offset(const std::string& name) const {
    return slice(name).offset;
}

template <typename T>
const typename Model<T>::AdapterTarget* Model<T>::target_for(const std::string& base_name) const {
    for (const auto& t : adapter_targets_) {
        if (t.base_name == base_name) return &t;
    }
    return nullptr;
}

template <typename T>
void Model<T>::set_trainable(TrainableSet s) {
    if (s == TrainableSet::adapters_only && !acfg_.enabled) {
        throw_config("adapters_only training requires adapters to be configured");
    }
    trainable_ = s;
}

template <typename T>
void Model<T>::project(const std::string& name, const T* x, T* y, std::int64_t rows,
                       T* lowrank_tmp, Cache&) const {
    const Slice& s = slice(name);
    kern::linear_forward(params_.data() + s.offset, x, y, rows, s.rows, s.cols);
    if (const AdapterTarget* t = target_for(name)) {
        kern::lowrank_forward(adapter_params_.data() + t->a_off,
                              adapter_params_.data() + t->b_off, x, lowrank_tmp, y, rows, t->out,
                              t->in, acfg_.rank, static_cast<T>(acfg_.scale));
    }
}

template <typename T>
void Model<T>::project_backward(const std::string& name, const T* x, const T* dy, T* dx,
                                std::int64_t rows, const T* lowrank_tmp, Cache& c) {
    const Slice& s = slice(name);
    if (trainable_ == TrainableSet::all) {
        kern::linear_backward_weight(dy, x, grads_.data() + s.offset, rows, s.rows, s.cols);
    }
    kern::linear_backward_input(params_.data() + s.offset, dy, dx, rows, s.rows, s.cols);
    if (const AdapterTarget* t = target_for(name)) {
        kern::lowrank_backward(adapter_params_.data() + t->a_off,
                               adapter_params_.data() + t->b_off, x, lowrank_tmp, dy,
                               adapter_grads_.data() + t->a_off, adapter_grads_.data() + t->b_off,
                               dx, c.dlr_tmp.data(), rows, t->out, t->in, acfg_.rank,
                               static_cast<T>(acfg_.scale), /*accumulate_params=*/true);
    }
}

template <typename T>
typename Model<T>::Cache* Model<T>::new_cache() const {
    auto* c = new Cache();
    const std::int64_t ctx = cfg_.context_len, d = cfg_.d_model, ff = cfg_.d_ff,
                       v = cfg_.vocab_size, h = cfg_.n_heads, r = acfg_.enabled ? acfg_.rank : 1;
    c->x0.assign(static_cast<std::size_t>(ctx * d), T(0));
    c->layers.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (auto& L : c->layers) {
        for (auto* vptr : {&L.ln1_out, &L.q, &L.k, &L.v, &L.att_out, &L.att_proj, &L.ln2_out,
                           &L.fc2_out, &L.stream_attn, &L.stream_mlp}) {
            vptr->assign(static_cast<std::size_t>(ctx * d), T(0));
        }
        L.ln1_mean.assign(static_cast<std::size_t>(ctx), T(0));
        L.ln1_rstd.assign(static_cast<std::size_t>(ctx), T(0));
        L.ln2_mean.assign(static_cast<std::size_t>(ctx), T(0));
        L.ln2_rstd.assign(static_cast<std::size_t>(ctx), T(0));
        L.probs.assign(static_cast<std::size_t>(h * ctx * ctx), T(0));
        L.fc1_pre.assign(static_cast<std::size_t>(ctx * ff), T(0));
        L.fc1_act.assign(static_cast<std::size_t>(ctx * ff), T(0));
        for (auto* vptr : {&L.tmp_q, &L.tmp_k, &L.tmp_v, &L.tmp_fc2}) {
            vptr->assign(static_cast<std::size_t>(ctx * r), T(0));
        }
        L.tmp_o.assign(static_cast<std::size_t>(ctx * r), T(0));
        L.tmp_fc1.assign(static_cast<std::size_t>(ctx * r), T(0));
        if (cfg_.dropout > 0.0) {
            L.drop_attn.assign(static_cast<std::size_t>(ctx * d), T(0));
            L.drop_mlp.assign(static_cast<std::size_t>(ctx * d), T(0));
        }
    }
    c->lnf_out.assign(static_cast<std::size_t>(ctx * d), T(0));
    c->lnf_mean.assign(static_cast<std::size_t>(ctx), T(0));
    c->lnf_rstd.assign(static_cast<std::size_t>(ctx), T(0));
    c->logits.assign(static_cast<std::size_t>(ctx * v), T(0));
    c->dlogits.assign(static_cast<std::size_t>(ctx * v), T(0));
    c->row_loss.assign(static_cast<std::size_t>(ctx), T(0));
    c->weights.assign(static_cast<std::size_t>(ctx), T(0));
    c->targets.assign(static_cast<std::size_t>(ctx), 0);
    for (auto* vptr : {&c->dstream, &c->dbranch, &c->dln, &c->dq, &c->dk, &c->dv, &c->datt}) {
        vptr->assign(static_cast<std::size_t>(ctx * d), T(0));
    }
    c->dscore.assign(static_cast<std::size_t>(h * ctx * ctx), T(0));
    c->dfc1_pre.assign(static_cast<std::size_t>(ctx * ff), T(0));
    c->dfc1_act.assign(static_cast<std::size_t>(ctx * ff), T(0));
    c->dlr_tmp.assign(static_cast<std::size_t>(ctx * r), T(0));
    return c;
}

template <typename T>
void Model<T>::free_cache(Cache* c) const {
    delete c;
}

namespace {
template <typename T>
void apply_dropout(T* x, T* mask, std::int64_t n, double p, Rng& rng) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::int64_t i = 0; i < n; ++i) {
        const T m = (rng.uniform01() >= p) ? keep_scale : T(0);
        mask[i] = m;
        x[i] *= m;
    }
}
}  // namespace

template <typename T>
void Model<T>::forward(const std::vector<std::int32_t>& ids, Cache& c, Rng* dropout_rng) const {
    const std::int64_t rows = static_cast<std::int64_t>(ids.size());
    if (rows < 1) throw_validate("forward needs at least one token");
    if (rows > cfg_.context_len) {
        throw_validate("sequence length " + std::to_string(rows) + " exceeds context_len " +
                       std::to_string(cfg_.context_len));
    }
    for (std::int32_t id : ids) {
        if (id < 0 || id >= cfg_.vocab_size) {
            throw_validate("token id out of range: " + std::to_string(id));
        }
    }
    c.rows = rows;
    const std::int64_t d = cfg_.d_model, ff = cfg_.d_ff, h = cfg_.n_heads, hd = d / h;

    const T* wte = params_.data() + wte_off_;
    const T* wpe = params_.data() + wpe_off_;
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* e = wte + static_cast<std::int64_t>(ids[static_cast<std::size_t>(t)]) * d;
        const T* p = wpe + t * d;
        T* x = c.x0.data() + t * d;
        for (std::int64_t i = 0; i < d; ++i) x[i] = e[i] + p[i];
    }

    const T* stream = c.x0.data();
    for (std::int64_t l = 0; l < cfg_.n_layers; ++l) {
        auto& L = c.layers[static_cast<std::size_t>(l)];
        const auto& S = layers_[static_cast<std::size_t>(l)];
        const std::string p = "l" + std::to_string(l) + ".";

        kern::layernorm_forward(stream, params_.data() + S.ln1_g, params_.data() + S.ln1_b,
                                L.ln1_out.data(), L.ln1_mean.data(), L.ln1_rstd.data(), rows, d,
                                static_cast<T>(1e-5));
        project(p + "wq", L.ln1_out.data(), L.q.data(), rows, L.tmp_q.data(), c);
        project(p + "wk", L.ln1_out.data(), L.k.data(), rows, L.tmp_k.data(), c);
        project(p + "wv", L.ln1_out.data(), L.v.data(), rows, L.tmp_v.data(), c);
        kern::attention_forward(L.q.data(), L.k.data(), L.v.data(), L.probs.data(),
                                L.att_out.data(), rows, h, hd);
        project(p + "wo", L.att_out.data(), L.att_proj.data(), rows, L.tmp_o.data(), c);
        if (cfg_.dropout > 0.0 && dropout_rng != nullptr) {
            apply_dropout(L.att_proj.data(), L.drop_attn.data(), rows * d, cfg_.dropout,
                          *dropout_rng);
        }
        for (std::int64_t i = 0; i < rows * d; ++i) {
            L.stream_attn[static_cast<std::size_t>(i)] =
                stream[i] + L.att_proj[static_cast<std::size_t>(i)];
        }

        kern::layernorm_forward(L.stream_attn.data(), params_.data() + S.ln2_g,
                                params_.data() + S.ln2_b, L.ln2_out.data(), L.ln2_mean.data(),
                                L.ln2_rstd.data(), rows, d, static_cast<T>(1e-5));
        project(p + "fc1", L.ln2_out.data(), L.fc1_pre.data(), rows, L.tmp_fc1.data(), c);
        kern::gelu_forward(L.fc1_pre.data(), L.fc1_act.data(), rows * ff);
        project(p + "fc2", L.fc1_act.data(), L.fc2_out.data(), rows, L.tmp_fc2.data(), c);
        if (cfg_.dropout > 0.0 && dropout_rng != nullptr) {
            apply_dropout(L.fc2_out.data(), L.drop_mlp.data(), rows * d, cfg_.dropout,
                          *dropout_rng);
        }
        for (std::int64_t i = 0; i < rows * d; ++i) {
            L.stream_mlp[static_cast<std::size_t>(i)] =
                L.stream_attn[static_cast<std::size_t>(i)] +
                L.fc2_out[static_cast<std::size_t>(i)];
        }
        stream = L.stream_mlp.data();
    }

    kern::layernorm_forward(stream, params_.data() + lnf_g_off_, params_.data() + lnf_b_off_,
                            c.lnf_out.data(), c.lnf_mean.data(), c.lnf_rstd.data(), rows, d,
                            static_cast<T>(1e-5));
    kern::linear_forward(params_.data() + head_off_, c.lnf_out.data(), c.logits.data(), rows,
                         cfg_.vocab_size, d);
}

template <typename T>
double Model<T>::sequence_loss(const std::vector<std::int32_t>& ids, Cache& c) const {
    forward(ids, c, nullptr);
    const std::int64_t rows = c.rows;
    const SpanInfo span = response_span(ids, assistant_id_, newline_id_);
    const std::int64_t pred_rows = rows - 1;
    const T w = T(1) / static_cast<T>(span.n_supervised);
    for (std::int64_t t = 0; t < pred_rows; ++t) {
        c.targets[static_cast<std::size_t>(t)] = ids[static_cast<std::size_t>(t + 1)];
        c.weights[static_cast<std::size_t>(t)] = (t + 1 >= span.response_start) ? w : T(0);
    }
    const T loss = kern::softmax_xent(c.logits.data(), c.targets.data(), c.weights.data(),
                                      static_cast<T*>(nullptr), c.row_loss.data(), pred_rows,
                                      cfg_.vocab_size);
    return static_cast<double>(loss);
}

template <typename T>
double Model<T>::loss_and_grad(const std::vector<std::int32_t>& ids, double weight, Cache& c,
                               Rng* dropout_rng) {
    forward(ids, c, dropout_rng);
    const std::int64_t rows = c.rows;
    const std::int64_t d = cfg_.d_model, ff = cfg_.d_ff, h = cfg_.n_heads, hd = d / h;
    const SpanInfo span = response_span(ids, assistant_id_, newline_id_);
    const std::int64_t pred_rows = rows - 1;

    const T w_mean = T(1) / static_cast<T>(span.n_supervised);
    for (std::int64_t t = 0; t < pred_rows; ++t) {
        c.targets[static_cast<std::size_t>(t)] = ids[static_cast<std::size_t>(t + 1)];
        c.weights[static_cast<std::size_t>(t)] =
            (t + 1 >= span.response_start) ? static_cast<T>(weight) * w_mean : T(0);
    }
    kern::softmax_xent(c.logits.data(), c.targets.data(), c.weights.data(), c.dlogits.data(),
                       c.row_loss.data(), pred_rows, cfg_.vocab_size);
    // unweighted mean loss for reporting
    T mean_loss = 0;
    for (std::int64_t t = 0; t < pred_rows; ++t) {
        if (c.weights[static_cast<std::size_t>(t)] != T(0)) {
            mean_loss += c.row_loss[static_cast<std::size_t>(t)];
        }
    }
    mean_loss *= w_mean;

    // ---- backward ----
    const bool base_trainable = (trainable_ == TrainableSet::all);
    std::fill(c.dstream.begin(), c.dstream.begin() + rows * d, T(0));

    // head: dlogits rows cover pred_rows; the final position has no target
    if (pred_rows < rows) {
        std::fill(c.dlogits.begin() + pred_rows * cfg_.vocab_size,
                  c.dlogits.begin() + rows * cfg_.vocab_size, T(0));
    }
    std::fill(c.dln.begin(), c.dln.begin() + rows * d, T(0));
    if (base_trainable) {
        kern::linear_backward_weight(c.dlogits.data(), c.lnf_out.data(),
                                     grads_.data() + head_off_, rows, cfg_.vocab_size, d);
    }
    kern::linear_backward_input(params_.data() + head_off_, c.dlogits.data(), c.dln.data(), rows,
                                cfg_.vocab_size, d);

    const T* last_stream = cfg_.n_layers > 0
                               ? c.layers[static_cast<std::size_t>(cfg_.n_layers - 1)]
                                     .stream_mlp.data()
                               : c.x0.data();
    kern::layernorm_backward(c.dln.data(), last_stream, params_.data() + lnf_g_off_,
                             c.lnf_mean.data(), c.lnf_rstd.data(), c.dstream.data(),
                             grads_.data() + lnf_g_off_, grads_.data() + lnf_b_off_, rows, d,
                             base_trainable);

    for (std::int64_t l = cfg_.n_layers - 1; l >= 0; --l) {
        auto& L = c.layers[static_cast<std::size_t>(l)];
        const auto& S = layers_[static_cast<std::size_t>(l)];
        const std::string p = "l" + std::to_string(l) + ".";
        const T* stream_in =
            (l == 0) ? c.x0.data() : c.layers[static_cast<std::size_t>(l - 1)].stream_mlp.data();

        // MLP branch: dstream covers stream_mlp = stream_attn + fc2_out
        std::copy(c.dstream.begin(), c.dstream.begin() + rows * d, c.dbranch.begin());
        if (cfg_.dropout > 0.0 && !L.drop_mlp.empty() && dropout_rng != nullptr) {
            for (std::int64_t i = 0; i < rows * d; ++i) {
                c.dbranch[static_cast<std::size_t>(i)] *= L.drop_mlp[static_cast<std::size_t>(i)];
            }
        }
        std::fill(c.dfc1_act.begin(), c.dfc1_act.begin() + rows * ff, T(0));
        project_backward(p + "fc2", L.fc1_act.data(), c.dbranch.data(), c.dfc1_act.data(), rows,
                         L.tmp_fc2.data(), c);
        std::fill(c.dfc1_pre.begin(), c.dfc1_pre.begin() + rows * ff, T(0));
        kern::gelu_backward(c.dfc1_act.data(), L.fc1_pre.data(), c.dfc1_pre.data(), rows * ff);
        std::fill(c.dln.begin(), c.dln.begin() + rows * d, T(0));
        project_backward(p + "fc1", L.ln2_out.data(), c.dfc1_pre.data(), c.dln.data(), rows,
                         L.tmp_fc1.data(), c);
        kern::layernorm_backward(c.dln.data(), L.stream_attn.data(), params_.data() + S.ln2_g,
                                 L.ln2_mean.data(), L.ln2_rstd.data(), c.dstream.data(),
                                 grads_.data() + S.ln2_g, grads_.data() + S.ln2_b, rows, d,
                                 base_trainable);

        // attention branch: dstream covers stream_attn = stream_in + att_proj
        std::copy(c.dstream.begin(), c.dstream.begin() + rows * d, c.dbranch.begin());
        if (cfg_.dropout > 0.0 && !L.drop_attn.empty() && dropout_rng != nullptr) {
            for (std::int64_t i = 0; i < rows * d; ++i) {
                c.dbranch[static_cast<std::size_t>(i)] *= L.drop_attn[static_cast<std::size_t>(i)];
            }
        }
        std::fill(c.datt.begin(), c.datt.begin() + rows * d, T(0));
        project_backward(p + "wo", L.att_out.data(), c.dbranch.data(), c.datt.data(), rows,
                         L.tmp_o.data(), c);
        std::fill(c.dq.begin(), c.dq.begin() + rows * d, T(0));
        std::fill(c.dk.begin(), c.dk.begin() + rows * d, T(0));
        std::fill(c.dv.begin(), c.dv.begin() + rows * d, T(0));
        kern::attention_backward(L.q.data(), L.k.data(), L.v.data(), L.probs.data(),
                                 c.datt.data(), c.dq.data(), c.dk.data(), c.dv.data(),
                                 c.dscore.data(), rows, h, hd);
        std::fill(c.dln.begin(), c.dln.begin() + rows * d, T(0));
        project_backward(p + "wq", L.ln1_out.data(), c.dq.data(), c.dln.data(), rows,
                         L.tmp_q.data(), c);
        project_backward(p + "wk", L.ln1_out.data(), c.dk.data(), c.dln.data(), rows,
                         L.tmp_k.data(), c);
        project_backward(p + "wv", L.ln1_out.data(), c.dv.data(), c.dln.data(), rows,
                         L.tmp_v.data(), c);
        kern::layernorm_backward(c.dln.data(), stream_in, params_.data() + S.ln1_g,
                                 L.ln1_mean.data(), L.ln1_rstd.data(), c.dstream.data(),
                                 grads_.data() + S.ln1_g, grads_.data() + S.ln1_b, rows, d,
                                 base_trainable);
    }

    if (base_trainable) {
        // embedding scatter: parallelizing over t would race on repeated
        // tokens, and the loop is tiny; keep it serial.
        T* gwte = grads_.data() + wte_off_;
        T* gwpe = grads_.data() + wpe_off_;
        for (std::int64_t t = 0; t < rows; ++t) {
            const T* dx = c.dstream.data() + t * d;
            T* ge = gwte + static_cast<std::int64_t>(ids[static_cast<std::size_t>(t)]) * d;
            T* gp = gwpe + t * d;
            for (std::int64_t i = 0; i < d; ++i) {
                ge[i] += dx[i];
                gp[i] += dx[i];
            }
        }
    }
    return static_cast<double>(mean_loss);
}

template <typename T>
void Model<T>::zero_grads() {
    std::fill(grads_.begin(), grads_.end(), T(0));
    std::fill(adapter_grads_.begin(), adapter_grads_.end(), T(0));
}

template <typename T>
void Model<T>::adam_step(const TrainConfig& cfg, std::int64_t step_index) {
    const bool base_trainable = (trainable_ == TrainableSet::all);
    T norm_sq = 0;
    if (base_trainable) {
        norm_sq += kern::squared_norm(grads_.data(), static_cast<std::int64_t>(grads_.size()));
    }
    if (acfg_.enabled) {
        norm_sq += kern::squared_norm(adapter_grads_.data(),
                                      static_cast<std::int64_t>(adapter_grads_.size()));
    }
    const T norm = std::sqrt(norm_sq);
    T scale = T(1);
    if (static_cast<double>(norm) > cfg.grad_clip_norm) {
        scale = static_cast<T>(cfg.grad_clip_norm / static_cast<double>(norm));
    }
    const T bias1 = T(1) / (T(1) - static_cast<T>(std::pow(cfg.beta1, double(step_index))));
    const T bias2 = T(1) / (T(1) - static_cast<T>(std::pow(cfg.beta2, double(step_index))));
    if (base_trainable) {
        kern::adamw_step(params_.data(), grads_.data(), m_.data(), v_.data(),
                         static_cast<std::int64_t>(params_.size()),
                         static_cast<T>(cfg.learning_rate), static_cast<T>(cfg.beta1),
                         static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
                         static_cast<T>(cfg.weight_decay), bias1, bias2, scale);
    }
    if (acfg_.enabled) {
        kern::adamw_step(adapter_params_.data(), adapter_grads_.data(), adapter_m_.data(),
                         adapter_v_.data(), static_cast<std::int64_t>(adapter_params_.size()),
                         static_cast<T>(cfg.learning_rate), static_cast<T>(cfg.beta1),
                         static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
                         static_cast<T>(cfg.weight_decay), bias1, bias2, scale);
    }
}

template <typename T>
TrainLog Model<T>::train(const CompiledDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    set_trainable(cfg.trainable);
    const std::string frozen_before =
        (trainable_ == TrainableSet::adapters_only) ? base_digest() : std::string();

    struct Item {
        bool is_func;
        std::vector<std::int32_t> ids;
    };
    std::vector<Item> items;
    items.reserve(ds.clean.size() + ds.func.size());
    auto push_items = [&](const std::vector<ChatExample>& recs, bool is_func) {
        for (std::size_t i = 0; i < recs.size(); ++i) {
            Item it;
            it.is_func = is_func;
            it.ids = tok_.encode(serialize_chat(recs[i]));
            if (static_cast<std::int64_t>(it.ids.size()) > cfg_.context_len) {
                throw_validate("training example " + std::to_string(i) + " serializes to " +
                               std::to_string(it.ids.size()) + " tokens; context_len is " +
                               std::to_string(cfg_.context_len));
            }
            items.push_back(std::move(it));
        }
    };
    push_items(ds.clean, false);
    push_items(ds.func, true);
    if (items.empty()) throw_validate("training dataset is empty");

    Cache* cache = new_cache();
    Rng dropout_rng(mix64(cfg.seed, 0xD0));
    TrainLog log;
    std::int64_t step = 0;

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix64(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::int64_t n_clean = 0, n_func = 0;
            for (std::size_t i = b; i < e; ++i) {
                (items[order[i]].is_func ? n_func : n_clean) += 1;
            }
            zero_grads();
            double clean_sum = 0.0, func_sum = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                const Item& it = items[order[i]];
                const double w = it.is_func ? cfg.lambda_func / static_cast<double>(n_func)
                                            : 1.0 / static_cast<double>(n_clean);
                const double loss =
                    loss_and_grad(it.ids, w, *cache, cfg_.dropout > 0.0 ? &dropout_rng : nullptr);
                (it.is_func ? func_sum : clean_sum) += loss;
            }
            ++step;
            TrainStep rec;
            rec.step = step;
            rec.clean_loss = n_clean > 0 ? clean_sum / static_cast<double>(n_clean)
                                         : std::numeric_limits<double>::quiet_NaN();
            rec.func_loss = n_func > 0 ? func_sum / static_cast<double>(n_func)
                                       : std::numeric_limits<double>::quiet_NaN();
            rec.total_loss = (n_clean > 0 ? rec.clean_loss : 0.0) +
                             cfg.lambda_func * (n_func > 0 ? rec.func_loss : 0.0);
            if (!std::isfinite(rec.total_loss)) {
                free_cache(cache);
                throw_train("non-finite loss at step " + std::to_string(step));
            }
            log.steps.push_back(rec);
            adam_step(cfg, step);
        }
    }
    free_cache(cache);

    if (trainable_ == TrainableSet::adapters_only && base_digest() != frozen_before) {
        throw Error(ErrorFamily::internal, "frozen base parameters changed during adapter training");
    }
    return log;
}

template <typename T>
std::vector<std::int32_t> Model<T>::generate_ids(const std::vector<std::int32_t>& prompt_ids,
                                                 std::int64_t max_new_tokens) const {
    if (prompt_ids.empty()) throw_validate("generation prompt is empty");
    if (static_cast<std::int64_t>(prompt_ids.size()) > cfg_.context_len) {
        throw_validate("prompt length " + std::to_string(prompt_ids.size()) +
                       " exceeds context_len " + std::to_string(cfg_.context_len));
    }
    const std::int64_t d = cfg_.d_model, ff = cfg_.d_ff, h = cfg_.n_heads, hd = d / h,
                       v = cfg_.vocab_size;
    const std::int64_t r = acfg_.enabled ? acfg_.rank : 1;

    // per-layer KV caches and single-row scratch
    std::vector<std::vector<T>> kc(static_cast<std::size_t>(cfg_.n_layers)),
        vc(static_cast<std::size_t>(cfg_.n_layers));
    for (auto& kcl : kc) kcl.assign(static_cast<std::size_t>(cfg_.context_len * d), T(0));
    for (auto& vcl : vc) vcl.assign(static_cast<std::size_t>(cfg_.context_len * d), T(0));
    std::vector<T> x(static_cast<std::size_t>(d)), ln(static_cast<std::size_t>(d)),
        q(static_cast<std::size_t>(d)), krow(static_cast<std::size_t>(d)),
        vrow(static_cast<std::size_t>(d)), att(static_cast<std::size_t>(d)),
        proj(static_cast<std::size_t>(d)), f1(static_cast<std::size_t>(ff)),
        f1a(static_cast<std::size_t>(ff)), f2(static_cast<std::size_t>(d)),
        logits(static_cast<std::size_t>(v)), mean_buf(1), rstd_buf(1),
        lr_tmp(static_cast<std::size_t>(r));
    Cache dummy;  // project() takes a cache reference but never touches it here

    auto step_token = [&](std::int32_t id, std::int64_t pos) {
        const T* wte = params_.data() + wte_off_;
        const T* wpe = params_.data() + wpe_off_;
        for (std::int64_t i = 0; i < d; ++i) {
            x[static_cast<std::size_t>(i)] =
                wte[static_cast<std::int64_t>(id) * d + i] + wpe[pos * d + i];
        }
        for (std::int64_t l = 0; l < cfg_.n_layers; ++l) {
            const auto& S = layers_[static_cast<std::size_t>(l)];
            const std::string p = "l" + std::to_string(l) + ".";
            kern::serial::layernorm_forward(x.data(), params_.data() + S.ln1_g,
                                            params_.data() + S.ln1_b, ln.data(), mean_buf.data(),
                                            rstd_buf.data(), 1, d, static_cast<T>(1e-5));
            project(p + "wq", ln.data(), q.data(), 1, lr_tmp.data(), dummy);
            project(p + "wk", ln.data(), krow.data(), 1, lr_tmp.data(), dummy);
            project(p + "wv", ln.data(), vrow.data(), 1, lr_tmp.data(), dummy);
            T* kcl = kc[static_cast<std::size_t>(l)].data();
            T* vcl = vc[static_cast<std::size_t>(l)].data();
            for (std::int64_t i = 0; i < d; ++i) {
                kcl[pos * d + i] = krow[static_cast<std::size_t>(i)];
                vcl[pos * d + i] = vrow[static_cast<std::size_t>(i)];
            }
            const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
            for (std::int64_t hh = 0; hh < h; ++hh) {
                const std::int64_t hs = hh * hd;
                T max_score = -std::numeric_limits<T>::infinity();
                std::vector<T> sc(static_cast<std::size_t>(pos + 1));
                for (std::int64_t s = 0; s <= pos; ++s) {
                    T acc = 0;
                    for (std::int64_t j = 0; j < hd; ++j) {
                        acc += q[static_cast<std::size_t>(hs + j)] * kcl[s * d + hs + j];
                    }
                    acc *= inv_sqrt;
                    sc[static_cast<std::size_t>(s)] = acc;
                    if (acc > max_score) max_score = acc;
                }
                T sum = 0;
                for (std::int64_t s = 0; s <= pos; ++s) {
                    sc[static_cast<std::size_t>(s)] =
                        std::exp(sc[static_cast<std::size_t>(s)] - max_score);
                    sum += sc[static_cast<std::size_t>(s)];
                }
                const T inv_sum = T(1) / sum;
                for (std::int64_t s = 0; s <= pos; ++s) sc[static_cast<std::size_t>(s)] *= inv_sum;
                for (std::int64_t j = 0; j < hd; ++j) {
                    T acc = 0;
                    for (std::int64_t s = 0; s <= pos; ++s) {
                        acc += sc[static_cast<std::size_t>(s)] * vcl[s * d + hs + j];
                    }
                    att[static_cast<std::size_t>(hs + j)] = acc;
                }
            }
            project(p + "wo", att.data(), proj.data(), 1, lr_tmp.data(), dummy);
            for (std::int64_t i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += proj[static_cast<std::size_t>(i)];
            kern::serial::layernorm_forward(x.data(), params_.data() + S.ln2_g,
                                            params_.data() + S.ln2_b, ln.data(), mean_buf.data(),
                                            rstd_buf.data(), 1, d, static_cast<T>(1e-5));
            project(p + "fc1", ln.data(), f1.data(), 1, lr_tmp.data(), dummy);
            kern::serial::gelu_forward(f1.data(), f1a.data(), ff);
            project(p + "fc2", f1a.data(), f2.data(), 1, lr_tmp.data(), dummy);
            for (std::int64_t i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += f2[static_cast<std::size_t>(i)];
        }
        kern::serial::layernorm_forward(x.data(), params_.data() + lnf_g_off_,
                                        params_.data() + lnf_b_off_, ln.data(), mean_buf.data(),
                                        rstd_buf.data(), 1, d, static_cast<T>(1e-5));
        kern::linear_forward(params_.data() + head_off_, ln.data(), logits.data(), 1, v, d);
    };

    std::int64_t pos = 0;
    for (std::int32_t id : prompt_ids) step_token(id, pos++);

    std::vector<std::int32_t> out;
    for (std::int64_t n = 0; n < max_new_tokens && pos < cfg_.context_len; ++n) {
        std::int32_t best = 0;
        T best_val = logits[0];
        for (std::int64_t o = 1; o < v; ++o) {
            if (logits[static_cast<std::size_t>(o)] > best_val) {
                best_val = logits[static_cast<std::size_t>(o)];
                best = static_cast<std::int32_t>(o);
            }
        }
        if (best == end_id_) break;
        out.push_back(best);
        step_token(best, pos++);
    }
    return out;
}

template <typename T>
bool Model<T>::merge_adapters() {
    if (!acfg_.enabled) return false;
    for (const auto& t : adapter_targets_) {
        const Slice& s = slices_[static_cast<std::size_t>(t.base_slice)];
        T* w = params_.data() + s.offset;
        const T* a = adapter_params_.data() + t.a_off;
        const T* b = adapter_params_.data() + t.b_off;
        const T scale = static_cast<T>(acfg_.scale);
        for (std::int64_t o = 0; o < t.out; ++o) {
            for (std::int64_t i = 0; i < t.in; ++i) {
                T acc = 0;
                for (std::int64_t r = 0; r < acfg_.rank; ++r) {
                    acc += a[o * acfg_.rank + r] * b[r * t.in + i];
                }
                w[o * t.in + i] += scale * acc;
            }
        }
    }
    acfg_.enabled = false;
    adapter_slices_.clear();
    adapter_targets_.clear();
    adapter_params_.clear();
    adapter_grads_.clear();
    adapter_m_.clear();
    adapter_v_.clear();
    if (trainable_ == TrainableSet::adapters_only) trainable_ = TrainableSet::all;
    return true;
}

template <typename T>
std::string Model<T>::base_digest() const {
    return sha256_hex(params_.data(), params_.size() * sizeof(T));
}

template <typename T>
std::string Model<T>::adapter_digest() const {
    return sha256_hex(adapter_params_.data(), adapter_params_.size() * sizeof(T));
}

template class Model<double>;
template class Model<float>;

// ---------------------------------------------------------------------------
// ModelState facade
// ---------------------------------------------------------------------------

namespace {
template <typename T>
std::variant<Model<double>, Model<float>> make_impl_t(const LMConfig& cfg, TokenizerModel tok,
                                                      const AdapterConfig& acfg,
                                                      std::uint64_t seed) {
    return std::variant<Model<double>, Model<float>>(std::in_place_type<Model<T>>, cfg,
                                                     std::move(tok), acfg, seed);
}
}  // namespace

ModelState::ModelState(const LMConfig& cfg, TokenizerModel tok, const AdapterConfig& acfg,
                       std::uint64_t init_seed)
    : impl_(cfg.precision == Precision::f64
                ? make_impl_t<double>(cfg, std::move(tok), acfg, init_seed)
                : make_impl_t<float>(cfg, std::move(tok), acfg, init_seed)) {}

const LMConfig& ModelState::config() const {
    return std::visit([](const auto& m) -> const LMConfig& { return m.config(); }, impl_);
}

const TokenizerModel& ModelState::tokenizer() const {
    return std::visit([](const auto& m) -> const TokenizerModel& { return m.tokenizer(); },
                      impl_);
}

std::vector<double> ModelState::forward_logits(const std::vector<std::int32_t>& ids) const {
    return std::visit(
        [&](const auto& m) {
            auto* c = m.new_cache();
            m.forward(ids, *c);
            std::vector<double> out(c->logits.begin(),
                                    c->logits.begin() + c->rows * m.config().vocab_size);
            m.free_cache(c);
            return out;
        },
        impl_);
}

double ModelState::sequence_loss(const std::string& serialized) const {
    return std::visit(
        [&](const auto& m) {
            auto* c = m.new_cache();
            const double loss = m.sequence_loss(m.tokenizer().encode(serialized), *c);
            m.free_cache(c);
            return loss;
        },
        impl_);
}

double ModelState::joint_loss(const std::vector<std::string>& clean_serialized,
                              const std::vector<std::string>& func_serialized,
                              double lambda_func) const {
    if (clean_serialized.empty() && func_serialized.empty()) {
        throw_validate("joint loss needs at least one non-empty batch");
    }
    double total = 0.0;
    if (!clean_serialized.empty()) {
        double sum = 0.0;
        for (const auto& s : clean_serialized) sum += sequence_loss(s);
        total += sum / static_cast<double>(clean_serialized.size());
    }
    if (!func_serialized.empty()) {
        double sum = 0.0;
        for (const auto& s : func_serialized) sum += sequence_loss(s);
        total += lambda_func * sum / static_cast<double>(func_serialized.size());
    }
    return total;
}

TrainLog ModelState::train(const CompiledDataset& ds, const TrainConfig& cfg) {
    return std::visit([&](auto& m) { return m.train(ds, cfg); }, impl_);
}

std::string ModelState::generate(const std::string& prompt, std::int64_t max_new_tokens) const {
    return std::visit(
        [&](const auto& m) {
            const auto& tok = m.tokenizer();
            const auto ids = tok.encode(prompt);
            const auto out_ids = m.generate_ids(ids, max_new_tokens);
            std::vector<std::int32_t> kept;
            kept.reserve(out_ids.size());
            for (std::int32_t id : out_ids) {
                if (id == tok.special_id(kSystemMarker) || id == tok.special_id(kUserMarker) ||
                    id == tok.special_id(kAssistantMarker) || id == tok.special_id(kEndMarker)) {
                    continue;
                }
                kept.push_back(id);
            }
            return tok.decode(kept);
        },
        impl_);
}

bool ModelState::merge_adapters() {
    return std::visit([](auto& m) { return m.merge_adapters(); }, impl_);
}

std::string ModelState::base_digest() const {
    return std::visit([](const auto& m) { return m.base_digest(); }, impl_);
}

Model<double>& ModelState::m64() {
    if (auto* m = std::get_if<Model<double>>(&impl_)) return *m;
    throw_config("model is not in f64 precision");
}
const Model<double>& ModelState::m64() const {
    if (const auto* m = std::get_if<Model<double>>(&impl_)) return *m;
    throw_config("model is not in f64 precision");
}
Model<float>& ModelState::m32() {
    if (auto* m = std::get_if<Model<float>>(&impl_)) return *m;
    throw_config("model is not in f32 precision");
}
const Model<float>& ModelState::m32() const {
    if (const auto* m = std::get_if<Model<float>>(&impl_)) return *m;
    throw_config("model is not in f32 precision");
}

}  // namespace tau
