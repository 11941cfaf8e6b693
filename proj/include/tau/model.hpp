#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tau/compiler.hpp"
#include "tau/rng.hpp"
#include "tau/tokenizer.hpp"

namespace tau {

enum class Precision { f64, f32 };
const char* to_string(Precision p);
Precision precision_from_string(const std::string& s);

struct LMConfig {
    std::int64_t n_layers = 2;
    std::int64_t n_heads = 4;
    std::int64_t d_model = 64;
    std::int64_t d_ff = 256;
    std::int64_t context_len = 320;
    std::int64_t vocab_size = 0;  // must match the tokenizer
    double dropout = 0.0;
    Precision precision = Precision::f64;

    void validate() const;
};

struct AdapterConfig {
    bool enabled = false;
    std::int64_t rank = 8;
    double scale = 0.25;  // 2 / rank

    void validate() const;
};

enum class TrainableSet { all, adapters_only };

struct TrainConfig {
    std::int64_t epochs = 4;
    double learning_rate = 2e-4;
    std::int64_t batch_size = 1;
    double lambda_func = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    TrainableSet trainable = TrainableSet::all;

    void validate() const;
};

struct TrainStep {
    std::int64_t step = 0;
    double clean_loss = 0.0;  // NaN when the step carried no clean member
    double func_loss = 0.0;   // NaN when the step carried no func member
    double total_loss = 0.0;
};

struct TrainLog {
    std::vector<TrainStep> steps;
    std::string to_csv() const;
};

// Named view into a flat parameter store.
struct Slice {
    std::string name;
    std::int64_t offset = 0;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::int64_t size() const { return rows * cols; }
};

enum class ParamFamily { embedding, attention, mlp, norm, head, adapter };
ParamFamily family_of(const std::string& slice_name);

// Decoder-only transformer with learned positions, pre-norm residual
// blocks and an untied output head, plus optional low-rank adapters on
// the attention and MLP matrices.
template <typename T>
class Model {
  public:
    Model(LMConfig cfg, TokenizerModel tok, AdapterConfig acfg, std::uint64_t init_seed);

    struct Cache;  // activation buffers, defined in model.cpp

    // Full-sequence forward; logits land in the cache. dropout_rng null
    // disables dropout (inference path).
    void forward(const std::vector<std::int32_t>& ids, Cache& c, Rng* dropout_rng = nullptr) const;

    // Mean cross-entropy over the assistant response span.
    double sequence_loss(const std::vector<std::int32_t>& ids, Cache& c) const;

    // sequence_loss plus reverse pass; gradients scaled by `weight`
    // accumulate into the trainable stores.
    double loss_and_grad(const std::vector<std::int32_t>& ids, double weight, Cache& c,
                         Rng* dropout_rng);

    void zero_grads();
    // Gradient clipping followed by one AdamW update on the trainable
    // stores. step_index is 1-based.
    void adam_step(const TrainConfig& cfg, std::int64_t step_index);

    TrainLog train(const CompiledDataset& ds, const TrainConfig& cfg);

    std::vector<std::int32_t> generate_ids(const std::vector<std::int32_t>& prompt_ids,
                                           std::int64_t max_new_tokens) const;

    bool merge_adapters();  // returns false (no-op) when none are present

    Cache* new_cache() const;
    void free_cache(Cache*) const;

    const LMConfig& config() const { return cfg_; }
    const TokenizerModel& tokenizer() const { return tok_; }
    const AdapterConfig& adapter_config() const { return acfg_; }
    bool adapters_present() const { return acfg_.enabled; }

    std::vector<T>& base_params() { return params_; }
    const std::vector<T>& base_params() const { return params_; }
    std::vector<T>& adapter_params() { return adapter_params_; }
    const std::vector<T>& adapter_params() const { return adapter_params_; }
    const std::vector<Slice>& base_slices() const { return slices_; }
    const std::vector<Slice>& adapter_slices() const { return adapter_slices_; }
    const std::vector<T>& base_grads() const { return grads_; }
    const std::vector<T>& adapter_grads() const { return adapter_grads_; }

    std::string base_digest() const;
    std::string adapter_digest() const;

    TrainableSet trainable_set() const { return trainable_; }
    void set_trainable(TrainableSet s);

  private:
    struct LayerSlices {
        std::int64_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, fc1, fc2;
    };
    struct AdapterTarget {
        std::string base_name;
        std::int64_t base_slice;  // index into slices_
        std::int64_t a_off, b_off;
        std::int64_t out, in;
    };

    void build_layout();
    void init_params(std::uint64_t seed);
    const Slice& slice(const std::string& name) const;
    std::int64_t slice_offset(const std::string& name) const;
    const AdapterTarget* target_for(const std::string& base_name) const;

    // One projection with optional adapter contribution.
    void project(const std::string& name, const T* x, T* y, std::int64_t rows, T* lowrank_tmp,
                 Cache& c) const;
    void project_backward(const std::string& name, const T* x, const T* dy, T* dx,
                          std::int64_t rows, const T* lowrank_tmp, Cache& c);

    LMConfig cfg_;
    TokenizerModel tok_;
    AdapterConfig acfg_;
    TrainableSet trainable_ = TrainableSet::all;

    std::vector<Slice> slices_;
    std::vector<LayerSlices> layers_;
    std::int64_t wte_off_ = 0, wpe_off_ = 0, lnf_g_off_ = 0, lnf_b_off_ = 0, head_off_ = 0;

    std::vector<T> params_, grads_, m_, v_;
    std::vector<Slice> adapter_slices_;
    std::vector<AdapterTarget> adapter_targets_;
    std::vector<T> adapter_params_, adapter_grads_, adapter_m_, adapter_v_;

    std::int32_t assistant_id_ = -1, end_id_ = -1, newline_id_ = 10;
};

// Precision-erased handle used by the evaluator, persistence harness,
// pipeline and CLI.
class ModelState {
  public:
    ModelState(const LMConfig& cfg, TokenizerModel tok, const AdapterConfig& acfg,
               std::uint64_t init_seed);

    const LMConfig& config() const;
    const TokenizerModel& tokenizer() const;
    Precision precision() const { return config().precision; }

    std::vector<double> forward_logits(const std::vector<std::int32_t>& ids) const;
    double sequence_loss(const std::string& serialized) const;
    double joint_loss(const std::vector<std::string>& clean_serialized,
                      const std::vector<std::string>& func_serialized, double lambda_func) const;
    TrainLog train(const CompiledDataset& ds, const TrainConfig& cfg);
    std::string generate(const std::string& prompt, std::int64_t max_new_tokens) const;
    bool merge_adapters();

    std::string base_digest() const;
    std::string full_digest() const;  // base + adapters + config, for replay checks

    void save(const std::string& path, const std::string& train_echo_json = "{}") const;
    static ModelState load(const std::string& path);
    const std::string& train_echo() const { return train_echo_; }

    Model<double>& m64();
    const Model<double>& m64() const;
    Model<float>& m32();
    const Model<float>& m32() const;

  private:
    explicit ModelState(std::variant<Model<double>, Model<float>> impl)
        : impl_(std::move(impl)) {}
    std::variant<Model<double>, Model<float>> impl_;
    std::string train_echo_ = "{}";

    friend ModelState load_checkpoint(const std::string& path);
};

// Supervised-span bookkeeping shared by loss and tests: positions p
// predict ids[p+1]; a position is supervised iff ids[p+1] lies in the
// assistant response span (response tokens plus the end marker).
struct SpanInfo {
    std::int64_t response_start = 0;  // index of first response token
    std::int64_t n_supervised = 0;
};
SpanInfo response_span(const std::vector<std::int32_t>& ids, std::int32_t assistant_id,
                       std::int32_t newline_id);

}  // namespace tau
