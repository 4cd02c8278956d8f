#include "adapterlab/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "adapterlab/errors.hpp"
#include "adapterlab/random.hpp"

namespace adapterlab {

namespace {

constexpr TokenId kMarkerA = kFirstContentToken;
constexpr TokenId kMarkerB = kFirstContentToken + 1;
constexpr double kMarkerRate = 0.35;

TokenId uniform_content(Rng& rng, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> dist(kFirstContentToken, vocab - 1);
  return dist(rng);
}

// Marker-heavy sequences so that counts vary over their full range.
std::vector<TokenId> counting_sequence(Rng& rng, std::size_t vocab, std::size_t len, bool two_markers) {
  std::bernoulli_distribution marker(kMarkerRate);
  std::bernoulli_distribution coin(0.5);
  std::vector<TokenId> seq{kClsToken};
  for (std::size_t i = 0; i < len; ++i) {
    if (marker(rng)) {
      seq.push_back(two_markers && coin(rng) ? kMarkerB : kMarkerA);
    } else {
      TokenId t;
      do {
        t = uniform_content(rng, vocab);
      } while (t == kMarkerA || (two_markers && t == kMarkerB));
      seq.push_back(t);
    }
  }
  return seq;
}

std::vector<TokenId> sample_for_label(TaskKind kind, std::size_t label, Rng& rng, std::size_t vocab, std::size_t len) {
  switch (kind) {
    case TaskKind::kParity:
    case TaskKind::kMajority:
      for (;;) {
        auto seq = counting_sequence(rng, vocab, len, kind == TaskKind::kMajority);
        const long a = std::count(seq.begin(), seq.end(), kMarkerA);
        const long b = std::count(seq.begin(), seq.end(), kMarkerB);
        if (kind == TaskKind::kMajority && a == b) continue;
        if (label_of(kind, seq) == label) return seq;
      }
    case TaskKind::kFirstLastMatch: {
      std::vector<TokenId> seq{kClsToken};
      for (std::size_t i = 0; i < len; ++i) seq.push_back(uniform_content(rng, vocab));
      if (label == 1) {
        seq.back() = seq[1];
      } else {
        while (seq.back() == seq[1]) seq.back() = uniform_content(rng, vocab);
      }
      return seq;
    }
  }
  throw InputError("unknown task kind");
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kParity: return "parity";
    case TaskKind::kMajority: return "majority";
    case TaskKind::kFirstLastMatch: return "first_last_match";
  }
  return "parity";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "parity") return TaskKind::kParity;
  if (name == "majority") return TaskKind::kMajority;
  if (name == "first_last_match" || name == "first-last-match") return TaskKind::kFirstLastMatch;
  throw InputError("unknown task kind '" + std::string(name) + "' (parity, majority, first_last_match)");
}

std::string SyntheticTask::name() const { return std::string(to_string(spec.kind)); }

std::size_t label_of(TaskKind kind, const std::vector<TokenId>& tokens) {
  if (tokens.size() < 2) throw InputError("sequence has no content tokens");
  const long a = std::count(tokens.begin() + 1, tokens.end(), kMarkerA);
  const long b = std::count(tokens.begin() + 1, tokens.end(), kMarkerB);
  switch (kind) {
    case TaskKind::kParity: return static_cast<std::size_t>(a % 2);
    case TaskKind::kMajority: return a > b ? 1 : 0;
    case TaskKind::kFirstLastMatch: return tokens[1] == tokens.back() ? 1 : 0;
  }
  return 0;
}

SyntheticTask generate_task(const SyntheticTaskSpec& spec) {
  if (spec.vocab < 6) throw InputError("synthetic tasks need a vocabulary of at least 6 tokens");
  if (spec.content_length < 2) throw InputError("synthetic tasks need at least 2 content tokens");
  if (spec.train_size == 0 || spec.validation_size == 0 || spec.test_size == 0) {
    throw InputError("synthetic task splits must be nonempty");
  }
  SyntheticTask task;
  task.spec = spec;
  task.num_classes = 2;
  Rng rng(spec.seed);
  std::set<std::vector<TokenId>> seen;
  const std::size_t max_attempts = 10000;

  auto fill = [&](std::vector<Example>& split, std::size_t n) {
    split.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = i % task.num_classes;
      std::size_t attempts = 0;
      for (;;) {
        auto seq = sample_for_label(spec.kind, label, rng, spec.vocab, spec.content_length);
        if (seen.insert(seq).second) {
          split.push_back({std::move(seq), label});
          break;
        }
        if (++attempts > max_attempts) {
          throw InputError("synthetic task: cannot find enough distinct sequences; increase vocab or length");
        }
      }
    }
    std::shuffle(split.begin(), split.end(), rng);
  };
  fill(task.train, spec.train_size);
  fill(task.validation, spec.validation_size);
  fill(task.test, spec.test_size);
  return task;
}

double majority_fraction(const std::vector<Example>& examples, std::size_t num_classes) {
  if (examples.empty()) throw InputError("majority_fraction: empty split");
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& e : examples) counts.at(e.label) += 1;
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(examples.size());
}

std::vector<std::vector<TokenId>> generate_corpus(std::size_t vocab, std::size_t content_length, std::size_t count,
                                                  std::uint64_t seed) {
  if (count == 0) throw InputError("corpus size must be positive");
  Rng rng(seed);
  std::vector<std::vector<TokenId>> corpus;
  corpus.reserve(count);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < count; ++i) {
    const auto kind = static_cast<TaskKind>(i % 3);
    const std::size_t label = coin(rng) ? 1 : 0;
    corpus.push_back(sample_for_label(kind, label, rng, vocab, content_length));
  }
  return corpus;
}

TokenBatch make_batch(const std::vector<Example>& examples, std::span<const std::size_t> indices) {
  TokenBatch b;
  b.batch = indices.size();
  b.length = examples.at(indices.front()).tokens.size();
  b.ids.reserve(b.batch * b.length);
  for (std::size_t i : indices) {
    const auto& t = examples.at(i).tokens;
    if (t.size() != b.length) throw InputError("batch sequences must share one length");
    b.ids.insert(b.ids.end(), t.begin(), t.end());
  }
  return b;
}

std::vector<std::size_t> labels_of(const std::vector<Example>& examples, std::span<const std::size_t> indices) {
  std::vector<std::size_t> y;
  y.reserve(indices.size());
  for (std::size_t i : indices) y.push_back(examples.at(i).label);
  return y;
}

namespace {
std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}
}  // namespace

TokenBatch make_batch(const std::vector<Example>& examples) {
  if (examples.empty()) throw InputError("cannot batch an empty split");
  return make_batch(examples, all_indices(examples.size()));
}

std::vector<std::size_t> labels_of(const std::vector<Example>& examples) {
  return labels_of(examples, all_indices(examples.size()));
}

}  // namespace adapterlab
