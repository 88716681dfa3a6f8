#include "muscale/data.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "muscale/rng.hpp"

namespace muscale {

namespace fs = std::filesystem;

Corpus load_corpus(const fs::path& path) {
  const fs::path sidecar = path.string() + ".json";
  std::ifstream meta(sidecar);
  if (!meta) throw FormatError("missing corpus sidecar " + sidecar.string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad corpus sidecar " + sidecar.string() + ": " + e.what());
  }
  Corpus c;
  c.vocab_size = j.at("vocab_size").get<std::int64_t>();
  if (c.vocab_size < 1) throw FormatError("corpus vocab_size must be >= 1");
  const auto count = j.at("count").get<std::int64_t>();
  c.source = j.value("tokenizer", std::string("unknown"));

  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open corpus file " + path.string());
  in.seekg(0, std::ios::end);
  const std::int64_t bytes = static_cast<std::int64_t>(in.tellg());
  in.seekg(0);
  if (bytes == 0) throw FormatError("corpus too small: " + path.string() + " is empty");
  if (bytes % 4 != 0)
    throw FormatError("truncated corpus file " + path.string(), bytes - bytes % 4);
  if (bytes / 4 != count)
    throw FormatError("corpus file holds " + std::to_string(bytes / 4) +
                      " tokens but sidecar says " + std::to_string(count));
  c.tokens.resize(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(c.tokens.data()), bytes);
  if (!in) throw FormatError("short read on corpus file " + path.string());
  for (std::size_t i = 0; i < c.tokens.size(); ++i) {
    if (static_cast<std::int64_t>(c.tokens[i]) >= c.vocab_size)
      throw FormatError("token id " + std::to_string(c.tokens[i]) + " >= vocab_size " +
                            std::to_string(c.vocab_size),
                        static_cast<std::int64_t>(i) * 4);
  }
  return c;
}

void save_corpus(const Corpus& corpus, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write corpus file " + path.string());
  out.write(reinterpret_cast<const char*>(corpus.tokens.data()),
            static_cast<std::streamsize>(corpus.tokens.size() * 4));
  nlohmann::ordered_json j;
  j["vocab_size"] = corpus.vocab_size;
  j["count"] = corpus.size();
  j["tokenizer"] = corpus.source.empty() ? "unknown" : corpus.source;
  std::ofstream meta(path.string() + ".json");
  meta << j.dump(2) << "\n";
}

fs::path resolve_corpus_path(const fs::path& path) {
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("MUSCALE_DATA_DIR")) {
    const fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined;
  }
  return path;
}

std::vector<std::vector<double>> markov_transition(std::int64_t vocab, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6d61726b6f76ULL));
  std::vector<std::vector<double>> P(static_cast<std::size_t>(vocab),
                                     std::vector<double>(static_cast<std::size_t>(vocab)));
  for (auto& row : P) {
    double sum = 0.0;
    for (auto& p : row) {
      // log-normal weights give rows well away from uniform
      p = std::exp(2.5 * rng.next_normal());
      sum += p;
    }
    for (auto& p : row) p /= sum;
  }
  return P;
}

Corpus synth_corpus(SynthKind kind, std::int64_t size, std::int64_t vocab, std::uint64_t seed) {
  if (size < 1) throw SpecError("synth_corpus: size must be >= 1");
  Corpus c;
  c.vocab_size = vocab;
  c.tokens.reserve(static_cast<std::size_t>(size));
  switch (kind) {
    case SynthKind::uniform: {
      if (vocab < 2) throw SpecError("synth_corpus: vocab must be >= 2");
      Rng rng(seed);
      for (std::int64_t i = 0; i < size; ++i)
        c.tokens.push_back(static_cast<std::uint32_t>(rng.next_below(static_cast<std::uint64_t>(vocab))));
      c.source = "synth-uniform";
      break;
    }
    case SynthKind::markov: {
      if (vocab < 2) throw SpecError("synth_corpus: vocab must be >= 2");
      const auto P = markov_transition(vocab, seed);
      Rng rng(mix_seed(seed, 0x636861696eULL));
      std::uint32_t state = static_cast<std::uint32_t>(rng.next_below(static_cast<std::uint64_t>(vocab)));
      for (std::int64_t i = 0; i < size; ++i) {
        c.tokens.push_back(state);
        const double u = rng.next_double();
        double acc = 0.0;
        std::uint32_t next = static_cast<std::uint32_t>(vocab - 1);
        for (std::int64_t j = 0; j < vocab; ++j) {
          acc += P[state][static_cast<std::size_t>(j)];
          if (u < acc) {
            next = static_cast<std::uint32_t>(j);
            break;
          }
        }
        state = next;
      }
      c.source = "synth-markov";
      break;
    }
    case SynthKind::text: {
      if (vocab != 256) throw SpecError("synth_corpus: text kind is byte-level (vocab 256)");
      const std::string& sample = bundled_text_sample();
      const std::size_t offset = static_cast<std::size_t>(splitmix64(seed) % sample.size());
      for (std::int64_t i = 0; i < size; ++i)
        c.tokens.push_back(static_cast<unsigned char>(
            sample[(offset + static_cast<std::size_t>(i)) % sample.size()]));
      c.source = "synth-text";
      break;
    }
  }
  return c;
}

BatchStream::BatchStream(const Corpus& corpus, std::int64_t batch_size, std::int64_t seq_len,
                         std::uint64_t seed)
    : corpus_(&corpus), batch_(batch_size), seq_(seq_len), seed_(seed) {
  if (batch_ < 1 || seq_ < 1) throw SpecError("batch_size and seq_len must be >= 1");
  if (corpus.size() < batch_ * seq_ + 1)
    throw SpecError("corpus too small: " + std::to_string(corpus.size()) + " tokens < " +
                    std::to_string(batch_ * seq_ + 1) + " needed for one batch");
  const std::int64_t period = corpus.size() - seq_;
  start_ = static_cast<std::int64_t>(splitmix64(seed) % static_cast<std::uint64_t>(period));
}

Batch BatchStream::batch_at(std::int64_t index) const {
  const std::int64_t period = corpus_->size() - seq_;
  Batch b;
  b.batch = batch_;
  b.seq = seq_;
  b.inputs.resize(static_cast<std::size_t>(batch_ * seq_));
  b.targets.resize(static_cast<std::size_t>(batch_ * seq_));
  for (std::int64_t j = 0; j < batch_; ++j) {
    const std::int64_t window = index * batch_ + j;
    const std::int64_t pos = (start_ + window * seq_) % period;
    for (std::int64_t t = 0; t < seq_; ++t) {
      b.inputs[static_cast<std::size_t>(j * seq_ + t)] =
          static_cast<std::int32_t>(corpus_->tokens[static_cast<std::size_t>(pos + t)]);
      b.targets[static_cast<std::size_t>(j * seq_ + t)] =
          static_cast<std::int32_t>(corpus_->tokens[static_cast<std::size_t>(pos + t + 1)]);
    }
  }
  return b;
}

Batch BatchStream::next() {
  Batch b = batch_at(cursor_);
  ++cursor_;
  const std::int64_t period = corpus_->size() - seq_;
  epoch_ = (cursor_ * batch_ * seq_) / period;
  return b;
}

std::uint64_t hash_batches(const Corpus& corpus, std::int64_t batch_size, std::int64_t seq_len,
                           std::uint64_t seed, std::int64_t n) {
  BatchStream stream(corpus, batch_size, seq_len, seed);
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::int64_t i = 0; i < n; ++i) {
    const Batch b = stream.next();
    for (auto t : b.inputs) h = mix_seed(h, static_cast<std::uint64_t>(t));
    for (auto t : b.targets) h = mix_seed(h, static_cast<std::uint64_t>(t));
  }
  return h;
}

}  // namespace muscale
