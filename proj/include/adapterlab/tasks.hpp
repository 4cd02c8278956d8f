#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adapterlab/transformer.hpp"

namespace adapterlab {

enum class TaskKind {
  kParity,          // odd number of the marker token?
  kMajority,        // more of token A than token B?
  kFirstLastMatch,  // first content token equals the last one?
};

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct Example {
  std::vector<TokenId> tokens;  // CLS followed by content tokens
  std::size_t label = 0;
};

struct SyntheticTaskSpec {
  TaskKind kind = TaskKind::kParity;
  std::size_t vocab = 12;           // model vocabulary; content tokens are [2, vocab)
  std::size_t content_length = 7;   // sequence length is content_length + 1
  std::size_t train_size = 512;
  std::size_t validation_size = 256;
  std::size_t test_size = 256;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  SyntheticTaskSpec spec;
  std::size_t num_classes = 2;
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;

  std::string name() const;
};

/// Labels are drawn balanced, then a sequence is sampled for that label.
/// No sequence appears in more than one split.
SyntheticTask generate_task(const SyntheticTaskSpec& spec);

std::size_t label_of(TaskKind kind, const std::vector<TokenId>& tokens);

/// Fraction of the most frequent label in `examples`.
double majority_fraction(const std::vector<Example>& examples, std::size_t num_classes);

/// Unlabelled pretraining text drawn from all three generators in turn.
std::vector<std::vector<TokenId>> generate_corpus(std::size_t vocab, std::size_t content_length, std::size_t count,
                                                  std::uint64_t seed);

TokenBatch make_batch(const std::vector<Example>& examples, std::span<const std::size_t> indices);
std::vector<std::size_t> labels_of(const std::vector<Example>& examples, std::span<const std::size_t> indices);

// Whole split, in order.
TokenBatch make_batch(const std::vector<Example>& examples);
std::vector<std::size_t> labels_of(const std::vector<Example>& examples);

}  // namespace adapterlab
