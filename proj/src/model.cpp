#include "muscale/model.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

namespace muscale {

void ModelSpec::validate() const {
  if (n_layer < 1) throw SpecError("n_layer must be >= 1");
  if (vocab_size < 2) throw SpecError("vocab_size must be >= 2");
  if (width <= 0 || head_size <= 0) throw SpecError("width and head_size must be positive");
  if (width % head_size != 0)
    throw SpecError("width " + std::to_string(width) + " not divisible by head_size " +
                    std::to_string(head_size));
  if (block_size < 1) throw SpecError("block_size must be >= 1");
}

const char* param_class_name(ParamClass c) {
  switch (c) {
    case ParamClass::matrix_like: return "matrix-like";
    case ParamClass::output: return "output";
    case ParamClass::other: return "other";
  }
  return "?";
}

namespace {

ParamInfo matrix(std::string name, std::int64_t rows, std::int64_t cols) {
  return {std::move(name), {rows, cols}, ParamClass::matrix_like, {true, true}, false, false};
}

ParamInfo vec_other(std::string name, std::int64_t n) {
  return {std::move(name), {n}, ParamClass::other, {true}, false, false};
}

}  // namespace

std::vector<ParamInfo> param_layout(const ModelSpec& spec) {
  spec.validate();
  const std::int64_t w = spec.width;
  const std::int64_t V = spec.vocab_size;
  std::vector<ParamInfo> out;
  out.push_back({"tok_emb", {V, w}, ParamClass::other, {false, true}, true, false});
  if (spec.architecture == Architecture::gpt_block)
    out.push_back({"pos_emb", {spec.block_size, w}, ParamClass::other, {false, true}, true, false});
  for (std::int64_t l = 0; l < spec.n_layer; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    if (spec.architecture == Architecture::gpt_block) {
      out.push_back(vec_other(p + "ln1.g", w));
      out.push_back(vec_other(p + "ln1.b", w));
    } else {
      out.push_back(vec_other(p + "rms1.g", w));
    }
    out.push_back(matrix(p + "attn.wq", w, w));
    out.push_back(matrix(p + "attn.wk", w, w));
    out.push_back(matrix(p + "attn.wv", w, w));
    out.push_back(matrix(p + "attn.wo", w, w));
    if (spec.architecture == Architecture::gpt_block) {
      out.push_back(vec_other(p + "ln2.g", w));
      out.push_back(vec_other(p + "ln2.b", w));
      out.push_back(matrix(p + "mlp.fc", w, 4 * w));
      out.push_back(matrix(p + "mlp.proj", 4 * w, w));
    } else {
      out.push_back(vec_other(p + "rms2.g", w));
      out.push_back(matrix(p + "mlp.gate", w, 4 * w));
      out.push_back(matrix(p + "mlp.up", w, 4 * w));
      out.push_back(matrix(p + "mlp.down", 4 * w, w));
    }
  }
  if (spec.architecture == Architecture::gpt_block) {
    out.push_back(vec_other("ln_f.g", w));
    out.push_back(vec_other("ln_f.b", w));
  } else {
    out.push_back(vec_other("rms_f.g", w));
  }
  out.push_back({"lm_head", {V, w}, ParamClass::output, {false, true}, false, true});
  return out;
}

std::int64_t count_params(const ModelSpec& spec, bool include_embeddings) {
  std::int64_t total = 0;
  for (const auto& p : param_layout(spec)) {
    if (p.is_head) continue;  // mirrors tok_emb; counted once
    if (p.is_embedding && !include_embeddings) continue;
    total += shape_numel(p.shape);
  }
  return total;
}

BuiltModel BuiltModel::build(const ModelSpec& spec, const MuHyperparams& hp, std::uint64_t seed) {
  spec.validate();
  hp.validate();
  BuiltModel m;
  m.spec_ = spec;
  m.hp_ = hp;
  Rng rng(seed);
  const double std_matrix = std::sqrt(hp.variance_matrix());
  const double std_other = std::sqrt(hp.variance_other());
  for (const auto& info : param_layout(spec)) {
    Tensor t;
    const bool is_query = info.name.find("attn.wq") != std::string::npos;
    const bool is_norm_gain = info.name.size() >= 2 && info.name.compare(info.name.size() - 2, 2, ".g") == 0;
    const bool is_norm_bias = info.name.size() >= 2 && info.name.compare(info.name.size() - 2, 2, ".b") == 0;
    if (info.is_head || is_query) {
      t = Tensor::zeros(info.shape);
    } else if (is_norm_gain) {
      t = Tensor::full(info.shape, 1.0);
    } else if (is_norm_bias) {
      t = Tensor::zeros(info.shape);
    } else {
      const double sd = info.cls == ParamClass::matrix_like ? std_matrix : std_other;
      t = Tensor::randn(info.shape, rng, sd);
    }
    t.requires_grad = true;
    m.params_.push_back({info.name, std::move(t), info.cls});
  }
  return m;
}

BuiltModel::StepGraph BuiltModel::forward(const Batch& batch) const {
  const std::int64_t B = batch.batch, T = batch.seq;
  if (B < 1 || T < 1) throw SpecError("batch must be non-empty");
  if (T > spec_.block_size)
    throw SpecError("sequence length " + std::to_string(T) + " exceeds block_size " +
                    std::to_string(spec_.block_size));
  if (static_cast<std::int64_t>(batch.inputs.size()) != B * T ||
      static_cast<std::int64_t>(batch.targets.size()) != B * T)
    throw SpecError("batch token/target counts do not match batch*seq");

  const std::int64_t w = spec_.width;
  const std::int64_t H = spec_.n_head();
  const std::int64_t d = spec_.head_size;
  const bool gpt = spec_.architecture == Architecture::gpt_block;
  const bool causal = spec_.objective == Objective::causal_lm;
  const double attn_scale = spec_.attn_scale == AttnScale::one_over_d
                                ? 1.0 / static_cast<double>(d)
                                : 1.0 / std::sqrt(static_cast<double>(d));

  StepGraph sg;
  Graph& g = sg.graph;
  std::size_t next = 0;
  auto take = [&](const char* suffix) -> NodeId {
    const NamedParam& p = params_[next];
    if (p.name.find(suffix) == std::string::npos)
      throw UsageError(std::string("parameter order mismatch: wanted ") + suffix + " got " +
                       p.name);
    NodeId id = g.param(p.value);
    sg.param_ids.push_back(id);
    ++next;
    return id;
  };

  NodeId tok_emb = take("tok_emb");
  NodeId x = g.embedding(tok_emb, batch.inputs, {B, T});
  if (gpt) {
    NodeId pos_emb = take("pos_emb");
    std::vector<std::int32_t> pos(static_cast<std::size_t>(B * T));
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t)
        pos[static_cast<std::size_t>(b * T + t)] = static_cast<std::int32_t>(t);
    x = g.add(x, g.embedding(pos_emb, pos, {B, T}));
  }
  if (hp_.mult_other != 1.0) x = g.scale(x, hp_.mult_other);

  for (std::int64_t l = 0; l < spec_.n_layer; ++l) {
    NodeId a;
    if (gpt) {
      NodeId g1 = take("ln1.g"), b1 = take("ln1.b");
      a = g.layer_norm(x, g1, b1);
    } else {
      a = g.rms_norm(x, take("rms1.g"));
    }
    NodeId a2 = g.reshape(a, {B * T, w});
    auto heads = [&](NodeId m2) {
      return g.transpose_12(g.reshape(m2, {B, T, H, d}));
    };
    NodeId q = heads(g.matmul(a2, take("attn.wq")));
    NodeId k = heads(g.matmul(a2, take("attn.wk")));
    NodeId v = heads(g.matmul(a2, take("attn.wv")));
    if (!gpt) {
      q = g.rope(q);
      k = g.rope(k);
    }
    NodeId scores = g.scale(g.matmul_nt(q, k), attn_scale);
    NodeId probs = causal ? g.causal_softmax(scores) : g.softmax(scores);
    NodeId ctx = g.reshape(g.transpose_12(g.matmul(probs, v)), {B * T, w});
    NodeId attn_out = g.reshape(g.matmul(ctx, take("attn.wo")), {B, T, w});
    x = g.add(x, attn_out);

    NodeId m;
    if (gpt) {
      NodeId g2 = take("ln2.g"), b2 = take("ln2.b");
      m = g.reshape(g.layer_norm(x, g2, b2), {B * T, w});
      NodeId fc = take("mlp.fc");
      NodeId proj = take("mlp.proj");
      m = g.matmul(g.gelu(g.matmul(m, fc)), proj);
    } else {
      m = g.reshape(g.rms_norm(x, take("rms2.g")), {B * T, w});
      NodeId gate = g.silu(g.matmul(m, take("mlp.gate")));
      NodeId up = g.matmul(m, take("mlp.up"));
      m = g.matmul(g.mul(gate, up), take("mlp.down"));
    }
    x = g.add(x, g.reshape(m, {B, T, w}));
    sg.block_outputs.push_back(x);
  }

  NodeId xf;
  if (gpt) {
    NodeId gf = take("ln_f.g"), bf = take("ln_f.b");
    xf = g.layer_norm(x, gf, bf);
  } else {
    xf = g.rms_norm(x, take("rms_f.g"));
  }
  NodeId head = take("lm_head");
  NodeId logits = g.matmul_nt(g.reshape(xf, {B * T, w}), head);
  if (hp_.mult_output != 1.0) logits = g.scale(logits, hp_.mult_output);
  sg.logits = logits;
  sg.loss = g.cross_entropy(logits, batch.targets, -1);
  if (next != params_.size()) throw UsageError("forward consumed wrong number of parameters");
  return sg;
}

double BuiltModel::loss(const Batch& batch) const {
  StepGraph sg = forward(batch);
  return sg.graph.value(sg.loss).data[0];
}

MaskedBatch masked_lm_batch(const std::vector<std::int32_t>& tokens, std::int64_t vocab_size,
                            double mlm_probability, std::uint64_t seed) {
  if (tokens.empty()) throw SpecError("masked_lm_batch: empty sequence");
  if (!(mlm_probability > 0.0 && mlm_probability < 1.0))
    throw SpecError("mlm_probability must be in (0, 1)");
  if (vocab_size < 2) throw SpecError("masked_lm_batch: vocab_size must be >= 2");
  const std::int32_t mask_id = static_cast<std::int32_t>(vocab_size - 1);
  Rng rng(seed);
  MaskedBatch out;
  out.inputs = tokens;
  out.labels.assign(tokens.size(), -1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (rng.next_double() < mlm_probability) {
      out.labels[i] = tokens[i];
      out.inputs[i] = mask_id;
    }
  }
  return out;
}

namespace {

const char* arch_name(Architecture a) {
  return a == Architecture::gpt_block ? "gpt" : "llama";
}
const char* objective_name(Objective o) {
  return o == Objective::causal_lm ? "causal-lm" : "masked-lm";
}
const char* attn_scale_name(AttnScale s) {
  return s == AttnScale::one_over_d ? "one-over-d" : "one-over-sqrt-d";
}

}  // namespace

std::string ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["architecture"] = arch_name(architecture);
  j["objective"] = objective_name(objective);
  j["n_layer"] = n_layer;
  j["width"] = width;
  j["head_size"] = head_size;
  j["vocab_size"] = vocab_size;
  j["block_size"] = block_size;
  j["attn_scale"] = attn_scale_name(attn_scale);
  return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelSpec s;
  if (j.contains("architecture")) {
    const std::string a = j.at("architecture").get<std::string>();
    if (a == "gpt")
      s.architecture = Architecture::gpt_block;
    else if (a == "llama")
      s.architecture = Architecture::llama_block;
    else
      throw SpecError("unknown architecture '" + a + "' (expected gpt|llama)");
  }
  if (j.contains("objective")) {
    const std::string o = j.at("objective").get<std::string>();
    if (o == "causal-lm")
      s.objective = Objective::causal_lm;
    else if (o == "masked-lm")
      s.objective = Objective::masked_lm;
    else
      throw SpecError("unknown objective '" + o + "' (expected causal-lm|masked-lm)");
  }
  if (j.contains("n_layer")) s.n_layer = j.at("n_layer").get<std::int64_t>();
  if (j.contains("width")) s.width = j.at("width").get<std::int64_t>();
  if (j.contains("head_size")) s.head_size = j.at("head_size").get<std::int64_t>();
  if (j.contains("vocab_size")) s.vocab_size = j.at("vocab_size").get<std::int64_t>();
  if (j.contains("block_size")) s.block_size = j.at("block_size").get<std::int64_t>();
  if (j.contains("attn_scale")) {
    const std::string a = j.at("attn_scale").get<std::string>();
    if (a == "one-over-d")
      s.attn_scale = AttnScale::one_over_d;
    else if (a == "one-over-sqrt-d")
      s.attn_scale = AttnScale::one_over_sqrt_d;
    else
      throw SpecError("unknown attn_scale '" + a + "'");
  }
  s.validate();
  return s;
}

std::string ModelSpec::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json())));
  return buf;
}

}  // namespace muscale
