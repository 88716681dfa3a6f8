#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "muscale/errors.hpp"
#include "muscale/model.hpp"

namespace muscale {

/// Immutable token corpus. Shareable across streams once loaded.
struct Corpus {
  std::vector<std::uint32_t> tokens;
  std::int64_t vocab_size = 0;
  std::string source;

  std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }
};

/// Token file format: raw little-endian uint32 ids in <path>, JSON sidecar in
/// <path>.json with {"vocab_size": V, "count": N, "tokenizer": tag}. Bit-exact
/// interchange with any external tokenizer.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Resolves a corpus path against MUSCALE_DATA_DIR when the path as given
/// does not exist.
std::filesystem::path resolve_corpus_path(const std::filesystem::path& path);

enum class SynthKind { uniform, markov, text };

/// Self-contained corpus generators: iid uniform tokens, a seeded first-order
/// Markov chain, or byte-level text cycled from a bundled public-domain sample
/// (vocab 256).
Corpus synth_corpus(SynthKind kind, std::int64_t size, std::int64_t vocab, std::uint64_t seed);

/// Row-stochastic transition matrix used by the markov generator (exposed so
/// its entropy can be computed independently of the sampled chain).
std::vector<std::vector<double>> markov_transition(std::int64_t vocab, std::uint64_t seed);

/// The bundled public-domain text sample backing SynthKind::text.
const std::string& bundled_text_sample();

/// Deterministic batch cursor. The batch at index i is a pure function of
/// (corpus, batch_size, seq_len, seed, i): every consumer with equal
/// construction sees the identical batch sequence, independent of model width.
/// Windows advance seq_len tokens at a time from a seed-derived start offset
/// and wrap modulo (corpus size - seq_len); the epoch counter increments at
/// each wrap.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, std::int64_t batch_size, std::int64_t seq_len,
              std::uint64_t seed);

  /// Batch i without advancing the cursor. Targets are inputs shifted by one.
  Batch batch_at(std::int64_t index) const;

  /// Next batch; advances the cursor and the epoch counter.
  Batch next();

  std::int64_t cursor() const { return cursor_; }
  std::int64_t epoch() const { return epoch_; }
  std::int64_t batch_size() const { return batch_; }
  std::int64_t seq_len() const { return seq_; }
  std::int64_t vocab_size() const { return corpus_->vocab_size; }

 private:
  const Corpus* corpus_;
  std::int64_t batch_;
  std::int64_t seq_;
  std::uint64_t seed_;
  std::int64_t start_;
  std::int64_t cursor_ = 0;
  std::int64_t epoch_ = 0;
};

/// Order-sensitive hash of the first n batches; used to assert
/// width-independence of the stream.
std::uint64_t hash_batches(const Corpus& corpus, std::int64_t batch_size, std::int64_t seq_len,
                           std::uint64_t seed, std::int64_t n);

}  // namespace muscale
