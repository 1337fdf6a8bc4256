#include "dawgen/vocab.hpp"

#include "dawgen/error.hpp"

namespace dawgen {

const Vocabulary& Vocabulary::toy() {
  static const Vocabulary v;
  return v;
}

int Vocabulary::add(const std::string& tok) {
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(tok);
  ids_[tok] = id;
  return id;
}

void Vocabulary::add_pair(std::vector<int>& category, const std::string& a,
                          const std::string& b) {
  int ia = add(a);
  int ib = add(b);
  category.push_back(ia);
  category.push_back(ib);
  synonyms_[ia] = ib;
  synonyms_[ib] = ia;
}

void Vocabulary::oppose(const std::vector<std::string>& g1,
                        const std::vector<std::string>& g2) {
  std::vector<int> i1, i2;
  for (const auto& t : g1) i1.push_back(id(t));
  for (const auto& t : g2) i2.push_back(id(t));
  for (int a : i1) antonyms_[a] = i2;
  for (int b : i2) antonyms_[b] = i1;
}

Vocabulary::Vocabulary() {
  pad_ = add("<pad>");
  eos_ = add("<eos>");
  mask_ = add("<mask>");

  // verbalizers
  add("yes");
  add("maybe");
  add("no");

  // template words
  for (const char* t : {"are", "and", "equivalent", "?", "premise", "hypothesis",
                        "answer", "pair", "first", "second", "different", "implies",
                        "neutral", "contradicts"})
    add(t);
  int template_end = static_cast<int>(tokens_.size());

  add_pair(subjects_, "wolf", "fox");
  add_pair(subjects_, "bear", "lion");
  add_pair(subjects_, "hawk", "owl");
  add_pair(subjects_, "shark", "whale");
  add_pair(subjects_, "frog", "toad");
  add_pair(subjects_, "crab", "snail");

  add_pair(verbs_, "chases", "hunts");
  add_pair(verbs_, "flees", "escapes");
  add_pair(verbs_, "likes", "loves");
  add_pair(verbs_, "avoids", "shuns");
  add_pair(verbs_, "guards", "protects");
  add_pair(verbs_, "finds", "spots");

  add_pair(adjectives_, "big", "large");
  add_pair(adjectives_, "small", "tiny");
  add_pair(adjectives_, "bright", "shiny");
  add_pair(adjectives_, "dark", "dim");
  add_pair(adjectives_, "fast", "quick");
  add_pair(adjectives_, "slow", "lazy");

  add_pair(places_, "cave", "den");
  add_pair(places_, "river", "lake");
  add_pair(places_, "hill", "rock");
  add_pair(places_, "field", "meadow");
  add_pair(places_, "forest", "grove");
  add_pair(places_, "cliff", "ridge");

  oppose({"chases", "hunts"}, {"flees", "escapes"});
  oppose({"likes", "loves"}, {"avoids", "shuns"});
  oppose({"big", "large"}, {"small", "tiny"});
  oppose({"bright", "shiny"}, {"dark", "dim"});
  oppose({"fast", "quick"}, {"slow", "lazy"});

  template_word_.assign(tokens_.size(), false);
  for (int i = 3; i < template_end; ++i) template_word_[static_cast<std::size_t>(i)] = true;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw Error("unknown token: " + token);
  return it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::synonym_of(int id) const {
  auto it = synonyms_.find(id);
  return it == synonyms_.end() ? -1 : it->second;
}

bool Vocabulary::antonym(int a, int b) const {
  auto it = antonyms_.find(a);
  if (it == antonyms_.end()) return false;
  for (int x : it->second)
    if (x == b) return true;
  return false;
}

const std::vector<int>& Vocabulary::antonym_group(int id) const {
  auto it = antonyms_.find(id);
  return it == antonyms_.end() ? empty_ : it->second;
}

bool Vocabulary::is_template_word(int id) const {
  return id >= 0 && id < size() && template_word_[static_cast<std::size_t>(id)];
}

}  // namespace dawgen
