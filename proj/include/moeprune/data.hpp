#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moeprune/model.hpp"

namespace moeprune {

enum class Transform { identity, reverse, rotate };

Transform transform_from_name(const std::string& s);
const char* transform_name(Transform t);

// A synthetic "language": a token-substitution cipher over the shared base
// vocabulary plus a fixed sequence transform.
struct LanguageSpec {
    std::string code;
    std::uint64_t cipher_seed = 0;
    Transform transform = Transform::identity;
};

// Token ids: 0 = <eos>, 1..L = language tokens, then the base vocabulary.
class Vocab {
  public:
    Vocab(std::vector<std::string> lang_codes, int base_size);

    int eos() const { return 0; }
    int size() const { return 1 + static_cast<int>(lang_codes_.size()) + base_size_; }
    int num_languages() const { return static_cast<int>(lang_codes_.size()); }
    int base_size() const { return base_size_; }

    int lang_token(const std::string& code) const;
    bool has_language(const std::string& code) const;
    int base_token(int base_id) const;
    std::string token_string(int id) const;
    int token_id(const std::string& s) const;

  private:
    std::vector<std::string> lang_codes_;
    std::map<std::string, int> lang_index_;
    int base_size_;
};

struct CorpusSample {
    std::string src_lang, tgt_lang;
    std::vector<std::string> src_tokens, tgt_tokens;
};

std::vector<CorpusSample> read_corpus_tsv(const std::string& path);
void write_corpus_tsv(const std::string& path, const std::vector<CorpusSample>& samples);

// Deterministic cipher permutation over the base vocabulary.
std::vector<int> cipher_permutation(std::uint64_t cipher_seed, int base_vocab);

// Applies cipher then transform to a base token sequence.
std::vector<int> encode_language(const LanguageSpec& lang, int base_vocab,
                                 const std::vector<int>& base_tokens);

struct CorpusGenConfig {
    std::vector<LanguageSpec> languages;
    int base_vocab = 64;
    int min_len = 4;
    int max_len = 10;
    int train_per_direction = 800;
    int valid_per_direction = 16;
    int test_per_direction = 16;
    std::uint64_t seed = 1;
};

struct GeneratedCorpus {
    std::vector<CorpusSample> train, valid, test;
};

// All ordered language pairs share the same base sentences per split, so the
// corpus is multi-parallel; splits are disjoint as base token sequences.
GeneratedCorpus generate_corpus(const CorpusGenConfig& cfg);

// Assembles model inputs: source language token prepended on the encoder
// side (plus trailing eos), target language token on the decoder side.
TrainSample make_train_sample(const Vocab& vocab, const CorpusSample& sample);
std::vector<int> encoder_input(const Vocab& vocab, const CorpusSample& sample);

std::vector<CorpusSample> filter_direction(const std::vector<CorpusSample>& samples,
                                           const std::string& src, const std::string& tgt);

}  // namespace moeprune
