#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace dawgen {

/// Closed vocabulary for the planted tasks: specials, verbalizers, template
/// words, and content words organized into synonym pairs and antonym groups.
class Vocabulary {
 public:
  /// The fixed toy vocabulary used by every task in this lab.
  static const Vocabulary& toy();

  int id(const std::string& token) const;  // throws on unknown token
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  int pad_id() const { return pad_; }
  int eos_id() const { return eos_; }
  int mask_id() const { return mask_; }

  const std::vector<int>& subjects() const { return subjects_; }
  const std::vector<int>& verbs() const { return verbs_; }
  const std::vector<int>& adjectives() const { return adjectives_; }
  const std::vector<int>& places() const { return places_; }

  /// Synonym partner of a content token, or -1.
  int synonym_of(int id) const;

  /// True when `b` belongs to the antonym group of `a`.
  bool antonym(int a, int b) const;

  /// Members of the antonym group opposing `id` (empty if none).
  const std::vector<int>& antonym_group(int id) const;

  bool is_template_word(int id) const;

 private:
  Vocabulary();

  int add(const std::string& tok);
  void add_pair(std::vector<int>& category, const std::string& a, const std::string& b);
  void oppose(const std::vector<std::string>& g1, const std::vector<std::string>& g2);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int pad_ = 0, eos_ = 0, mask_ = 0;
  std::vector<int> subjects_, verbs_, adjectives_, places_;
  std::unordered_map<int, int> synonyms_;
  std::unordered_map<int, std::vector<int>> antonyms_;
  std::vector<bool> template_word_;
  std::vector<int> empty_;
};

}  // namespace dawgen
