#pragma once

#include <string>
#include <vector>

#include "dawgen/task.hpp"
#include "dawgen/vocab.hpp"

namespace dawgen {

/// Space-joined surface form of a token id sequence.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

/// Whitespace-split tokenizer; throws on words outside the vocabulary.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

/// One example per line: {"s1": "...", "s2": "...", "label": "<verbalizer>"}.
void write_examples_jsonl(const std::string& path,
                          const std::vector<Example>& examples,
                          const TaskSpec& spec, const Vocabulary& vocab);

/// Strict reader for the format above. Rejects unknown fields, missing
/// fields, labels outside the task's verbalizer set, and words outside
/// the vocabulary, naming the offending line.
std::vector<Example> read_examples_jsonl(const std::string& path,
                                         const TaskSpec& spec,
                                         const Vocabulary& vocab);

}  // namespace dawgen
