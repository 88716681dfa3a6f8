#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muscale/graph.hpp"
#include "muscale/mup.hpp"
#include "muscale/tensor.hpp"

namespace muscale {

enum class Architecture { gpt_block, llama_block };
enum class Objective { causal_lm, masked_lm };
enum class AttnScale { one_over_d, one_over_sqrt_d };

/// Architecture/width description. GPT blocks = layer-norm + GELU MLP +
/// learned positions; Llama blocks = RMS-norm + SiLU-gated MLP + rotary
/// positions. Width is the only field μScaling varies within a model design.
struct ModelSpec {
  Architecture architecture = Architecture::gpt_block;
  Objective objective = Objective::causal_lm;
  std::int64_t n_layer = 12;
  std::int64_t width = 256;
  std::int64_t head_size = 64;
  std::int64_t vocab_size = 50304;
  std::int64_t block_size = 1024;
  AttnScale attn_scale = AttnScale::one_over_d;

  void validate() const;
  std::int64_t n_head() const { return width / head_size; }
  ModelSpec with_width(std::int64_t w) const {
    ModelSpec s = *this;
    s.width = w;
    return s;
  }

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
  std::string hash() const;  // short content hash for run manifests
};

/// μP class of a parameter tensor: matrix-like iff both dims grow with width;
/// the word-decoding layer is its own class; everything else (embeddings,
/// norm gains/biases) is "other".
enum class ParamClass { matrix_like, output, other };

const char* param_class_name(ParamClass c);

/// Shape-level description of one parameter tensor, independent of any build.
struct ParamInfo {
  std::string name;
  Shape shape;
  ParamClass cls = ParamClass::other;
  std::vector<bool> dims_grow;  // per-dim: does this extent scale with width?
  bool is_embedding = false;    // token/position embedding
  bool is_head = false;         // word-decoding layer
};

/// The parameter layout of a spec, in deterministic declaration order.
std::vector<ParamInfo> param_layout(const ModelSpec& spec);

/// Parameter count under the "embedding counts as model size" rule.
/// include_embeddings=true counts token/position embeddings along with the
/// core and norms; the zero-initialized decoding head mirrors the token
/// embedding's shape and its V*w contribution is counted once (tied-size
/// convention). include_embeddings=false counts only the core and norms.
std::int64_t count_params(const ModelSpec& spec, bool include_embeddings);

struct NamedParam {
  std::string name;
  Tensor value;
  ParamClass cls = ParamClass::other;
};

/// One training batch: row-major [batch, seq] token ids, targets aligned
/// per-position (ignore_index -1 marks positions excluded from the loss).
struct Batch {
  std::int64_t batch = 0;
  std::int64_t seq = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
};

/// A built model: parameter tensors plus the forward closure producing the
/// loss graph for a batch. Single-threaded during forward/backward.
class BuiltModel {
 public:
  struct StepGraph {
    Graph graph;
    NodeId loss = -1;
    NodeId logits = -1;
    std::vector<NodeId> param_ids;     // parallel to params()
    std::vector<NodeId> block_outputs; // residual-stream output of each block
  };

  /// Builds at spec.width using hp as-is (callers transfer hp beforehand).
  /// Query projections and the word-decoding head start all-zero; matrix-like
  /// tensors draw from N(0, variance_matrix), embeddings from
  /// N(0, variance_other); norm gains start at one, biases at zero.
  static BuiltModel build(const ModelSpec& spec, const MuHyperparams& hp, std::uint64_t seed);

  /// Forward pass; the returned graph is ready for backward().
  StepGraph forward(const Batch& batch) const;

  /// Forward-only loss.
  double loss(const Batch& batch) const;

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  const ModelSpec& spec() const { return spec_; }
  const MuHyperparams& hp() const { return hp_; }

 private:
  ModelSpec spec_;
  MuHyperparams hp_;
  std::vector<NamedParam> params_;
};

/// BERT-style masking: each position is masked independently with probability
/// mlm_probability (replaced by the reserved id vocab_size-1); labels carry
/// the original token at masked positions and -1 elsewhere.
struct MaskedBatch {
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> labels;
};

MaskedBatch masked_lm_batch(const std::vector<std::int32_t>& tokens, std::int64_t vocab_size,
                            double mlm_probability, std::uint64_t seed);

}  // namespace muscale
