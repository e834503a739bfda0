#include "moeprune/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace moeprune {

Transform transform_from_name(const std::string& s) {
    if (s == "identity") return Transform::identity;
    if (s == "reverse") return Transform::reverse;
    if (s == "rotate") return Transform::rotate;
    throw std::invalid_argument("unknown transform: " + s);
}

const char* transform_name(Transform t) {
    switch (t) {
        case Transform::identity: return "identity";
        case Transform::reverse: return "reverse";
        case Transform::rotate: return "rotate";
    }
    return "?";
}

Vocab::Vocab(std::vector<std::string> lang_codes, int base_size)
    : lang_codes_(std::move(lang_codes)), base_size_(base_size) {
    if (base_size_ < 1) throw std::invalid_argument("Vocab: base vocabulary must be nonempty");
    for (size_t i = 0; i < lang_codes_.size(); ++i) {
        if (!lang_index_.emplace(lang_codes_[i], static_cast<int>(i) + 1).second)
            throw std::invalid_argument("Vocab: duplicate language code " + lang_codes_[i]);
    }
}

int Vocab::lang_token(const std::string& code) const {
    auto it = lang_index_.find(code);
    if (it == lang_index_.end())
        throw std::invalid_argument("unknown language code: " + code);
    return it->second;
}

bool Vocab::has_language(const std::string& code) const {
    return lang_index_.count(code) != 0;
}

int Vocab::base_token(int base_id) const {
    if (base_id < 0 || base_id >= base_size_)
        throw std::out_of_range("base token id out of range");
    return 1 + num_languages() + base_id;
}

std::string Vocab::token_string(int id) const {
    if (id == 0) return "<eos>";
    if (id >= 1 && id <= num_languages()) return "<lang:" + lang_codes_[id - 1] + ">";
    int base_id = id - 1 - num_languages();
    if (base_id < 0 || base_id >= base_size_)
        throw std::out_of_range("token id out of range");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%03d", base_id);
    return buf;
}

int Vocab::token_id(const std::string& s) const {
    if (s == "<eos>") return 0;
    if (s.rfind("<lang:", 0) == 0 && s.back() == '>')
        return lang_token(s.substr(6, s.size() - 7));
    if (!s.empty() && s[0] == 't') {
        int base_id = std::stoi(s.substr(1));
        return base_token(base_id);
    }
    throw std::invalid_argument("unknown token: " + s);
}

std::vector<CorpusSample> read_corpus_tsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<CorpusSample> out;
    std::string line;
    auto split_ws = [](const std::string& text) {
        std::vector<std::string> toks;
        std::istringstream ss(text);
        std::string t;
        while (ss >> t) toks.push_back(t);
        return toks;
    };
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 4)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 4 tab-separated columns");
        out.push_back({cols[0], cols[1], split_ws(cols[2]), split_ws(cols[3])});
    }
    return out;
}

void write_corpus_tsv(const std::string& path, const std::vector<CorpusSample>& samples) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open corpus file for writing: " + path);
    auto join = [](const std::vector<std::string>& toks) {
        std::string s;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) s += ' ';
            s += toks[i];
        }
        return s;
    };
    for (const auto& s : samples)
        os << s.src_lang << '\t' << s.tgt_lang << '\t' << join(s.src_tokens) << '\t'
           << join(s.tgt_tokens) << '\n';
}

std::vector<int> cipher_permutation(std::uint64_t cipher_seed, int base_vocab) {
    std::vector<int> perm(base_vocab);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(cipher_seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

std::vector<int> encode_language(const LanguageSpec& lang, int base_vocab,
                                 const std::vector<int>& base_tokens) {
    std::vector<int> perm = cipher_permutation(lang.cipher_seed, base_vocab);
    std::vector<int> out;
    out.reserve(base_tokens.size());
    for (int b : base_tokens) {
        if (b < 0 || b >= base_vocab) throw std::out_of_range("base token out of range");
        out.push_back(perm[b]);
    }
    switch (lang.transform) {
        case Transform::identity: break;
        case Transform::reverse: std::reverse(out.begin(), out.end()); break;
        case Transform::rotate:
            if (out.size() > 1) std::rotate(out.begin(), out.begin() + 1, out.end());
            break;
    }
    return out;
}

namespace {

std::vector<std::vector<int>> draw_base_sentences(std::mt19937_64& rng,
                                                  const CorpusGenConfig& cfg, int count,
                                                  std::set<std::vector<int>>& used) {
    std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
    std::uniform_int_distribution<int> tok_dist(0, cfg.base_vocab - 1);
    std::vector<std::vector<int>> out;
    int attempts = 0;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > count * 1000)
            throw std::runtime_error("corpus generation: cannot draw enough distinct sentences");
        int len = len_dist(rng);
        std::vector<int> s(len);
        for (int& t : s) t = tok_dist(rng);
        if (used.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> render(const Vocab& vocab, const std::vector<int>& surface) {
    std::vector<std::string> toks;
    toks.reserve(surface.size());
    for (int b : surface) toks.push_back(vocab.token_string(vocab.base_token(b)));
    return toks;
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusGenConfig& cfg) {
    if (cfg.languages.size() < 2)
        throw std::invalid_argument("corpus generation needs at least 2 languages");
    std::set<std::string> codes;
    for (const auto& l : cfg.languages)
        if (!codes.insert(l.code).second)
            throw std::invalid_argument("duplicate language code: " + l.code);
    if (cfg.train_per_direction < 1 || cfg.valid_per_direction < 1 ||
        cfg.test_per_direction < 1)
        throw std::invalid_argument("corpus sizes must be positive");

    std::vector<std::string> lang_codes;
    for (const auto& l : cfg.languages) lang_codes.push_back(l.code);
    Vocab vocab(lang_codes, cfg.base_vocab);

    std::mt19937_64 rng(cfg.seed);
    std::set<std::vector<int>> used;
    auto train_base = draw_base_sentences(rng, cfg, cfg.train_per_direction, used);
    auto valid_base = draw_base_sentences(rng, cfg, cfg.valid_per_direction, used);
    auto test_base = draw_base_sentences(rng, cfg, cfg.test_per_direction, used);

    GeneratedCorpus corpus;
    auto emit = [&](const std::vector<std::vector<int>>& base,
                    std::vector<CorpusSample>& dst) {
        for (const auto& src_lang : cfg.languages) {
            for (const auto& tgt_lang : cfg.languages) {
                if (src_lang.code == tgt_lang.code) continue;
                for (const auto& sentence : base) {
                    CorpusSample s;
                    s.src_lang = src_lang.code;
                    s.tgt_lang = tgt_lang.code;
                    s.src_tokens =
                        render(vocab, encode_language(src_lang, cfg.base_vocab, sentence));
                    s.tgt_tokens =
                        render(vocab, encode_language(tgt_lang, cfg.base_vocab, sentence));
                    dst.push_back(std::move(s));
                }
            }
        }
    };
    emit(train_base, corpus.train);
    emit(valid_base, corpus.valid);
    emit(test_base, corpus.test);
    return corpus;
}

std::vector<int> encoder_input(const Vocab& vocab, const CorpusSample& sample) {
    std::vector<int> ids;
    ids.push_back(vocab.lang_token(sample.src_lang));
    for (const auto& t : sample.src_tokens) ids.push_back(vocab.token_id(t));
    ids.push_back(vocab.eos());
    return ids;
}

TrainSample make_train_sample(const Vocab& vocab, const CorpusSample& sample) {
    TrainSample ts;
    ts.enc_input = encoder_input(vocab, sample);
    ts.dec_input.push_back(vocab.lang_token(sample.tgt_lang));
    for (const auto& t : sample.tgt_tokens) {
        int id = vocab.token_id(t);
        ts.dec_input.push_back(id);
        ts.labels.push_back(id);
    }
    ts.labels.push_back(vocab.eos());
    return ts;
}

std::vector<CorpusSample> filter_direction(const std::vector<CorpusSample>& samples,
                                           const std::string& src, const std::string& tgt) {
    std::vector<CorpusSample> out;
    for (const auto& s : samples)
        if (s.src_lang == src && s.tgt_lang == tgt) out.push_back(s);
    return out;
}

}  // namespace moeprune
