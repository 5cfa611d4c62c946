#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "hcp/errors.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// ---------------------------------------------------------------------------
// Prompt handling: find the person/action words in a prompt and map them to
// token indices inside the conditioning embedding sequence. Those indices
// are the only attention columns the alignment loss supervises.
// ---------------------------------------------------------------------------

struct WordMatch {
    std::string word;
    size_t begin = 0;  // character span [begin, end)
    size_t end = 0;
};

struct TokenSpan {
    std::string text;
    int64_t id = 0;
    size_t begin = 0;
    size_t end = 0;
};

struct PromptBundle {
    std::string raw_text;
    std::vector<TokenSpan> tokens;
    Tensor embeddings;                   // [N, D]
    std::vector<int64_t> human_indices;  // sorted, deduplicated, in [0, N)

    int64_t token_count() const { return static_cast<int64_t>(tokens.size()); }
};

// Word selector handle. The default is a lexicon matcher; anything that can
// return character spans of person/action words can be plugged in instead.
class HumanWordSelector {
public:
    virtual ~HumanWordSelector() = default;
    virtual std::vector<WordMatch> select(const std::string& text) const = 0;
};

namespace detail {

inline std::string lower_ascii(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Runs of alphanumeric characters with their spans.
inline std::vector<WordMatch> split_words(const std::string& text) {
    std::vector<WordMatch> words;
    size_t i = 0;
    while (i < text.size()) {
        if (!is_word_char(text[i])) {
            ++i;
            continue;
        }
        size_t begin = i;
        while (i < text.size() && is_word_char(text[i])) ++i;
        words.push_back({text.substr(begin, i - begin), begin, i});
    }
    return words;
}

}  // namespace detail

// Matches lowercase words against a term list. Light morphology on top:
// plural 's' is stripped, and gerunds fall back to their stem ("dancing"
// matches "dance"), so the list can stay short.
class LexiconSelector : public HumanWordSelector {
public:
    explicit LexiconSelector(std::unordered_set<std::string> terms) : terms_(std::move(terms)) {}

    static LexiconSelector with_default_lexicon() {
        return LexiconSelector(std::unordered_set<std::string>(kDefaultTerms.begin(), kDefaultTerms.end()));
    }

    // One term per line; '#' starts a comment.
    static LexiconSelector from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("lexicon: cannot open " + path);
        std::unordered_set<std::string> terms;
        std::string line;
        while (std::getline(in, line)) {
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
                line.pop_back();
            size_t start = 0;
            while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start])))
                ++start;
            if (start < line.size()) terms.insert(detail::lower_ascii(line.substr(start)));
        }
        if (terms.empty()) throw ValidationError("lexicon: no terms in " + path);
        return LexiconSelector(std::move(terms));
    }

    std::vector<WordMatch> select(const std::string& text) const override {
        std::vector<WordMatch> out;
        for (const WordMatch& w : detail::split_words(text)) {
            if (matches(detail::lower_ascii(w.word))) out.push_back(w);
        }
        return out;
    }

    bool matches(const std::string& lower_word) const {
        if (terms_.count(lower_word)) return true;
        if (lower_word.size() > 3 && lower_word.back() == 's' &&
            terms_.count(lower_word.substr(0, lower_word.size() - 1)))
            return true;
        if (lower_word.size() > 5 && lower_word.compare(lower_word.size() - 3, 3, "ing") == 0) {
            std::string stem = lower_word.substr(0, lower_word.size() - 3);
            if (terms_.count(stem) || terms_.count(stem + "e")) return true;
        }
        return false;
    }

private:
    static const std::vector<std::string> kDefaultTerms;

    std::unordered_set<std::string> terms_;
};

inline const std::vector<std::string> LexiconSelector::kDefaultTerms = {
    // person terms
    "person", "people", "human", "man", "men", "woman", "women", "boy", "girl",
    "child", "children", "kid", "lady", "gentleman", "guy", "dancer", "athlete",
    "acrobat", "gymnast", "runner", "swimmer", "skater", "surfer", "climber",
    "ballerina", "boxer", "player", "couple", "figure", "body",
    // action terms
    "yoga", "dance", "dancing", "tango", "ballet", "breakdance", "acrobatics",
    "gymnastics", "handstand", "cartwheel", "backflip", "somersault", "jump",
    "jumping", "leap", "run", "running", "sprint", "walk", "walking", "swim",
    "swimming", "dive", "stretch", "stretching", "pose", "posing", "sit",
    "sitting", "stand", "standing", "kneel", "kneeling", "squat", "squatting",
    "climb", "climbing", "skate", "skating", "ski", "skiing", "surf", "surfing",
    "box", "boxing", "karate", "kungfu", "meditate", "meditating", "exercise",
    "exercising", "balance", "balancing",
};

/// Person/action words of a prompt with their character spans.
inline std::vector<WordMatch> extract_human_centric_words(const std::string& text,
                                                          const HumanWordSelector& selector) {
    if (text.empty()) throw ValidationError("extract_human_centric_words: empty text");
    return selector.select(text);
}

// ---------------------------------------------------------------------------
// Tokenizer / embedder handle and the deterministic toy implementation.
// ---------------------------------------------------------------------------

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::vector<TokenSpan> tokenize(const std::string& text) const = 0;
    virtual Tensor embed(const std::vector<TokenSpan>& tokens) const = 0;
    virtual int64_t embed_dim() const = 0;
};

// Splits words into chunks of at most `max_subword_len` characters, assigns
// hash ids and hash-seeded gaussian embedding rows. A begin-of-sequence
// token at index 0 keeps every sequence non-empty, including the empty
// prompt used for unconditional guidance.
class ToyTextEncoder : public TextEncoder {
public:
    ToyTextEncoder(int64_t embed_dim, uint64_t seed, size_t max_subword_len = 6)
        : embed_dim_(embed_dim), seed_(seed), max_subword_len_(max_subword_len) {
        if (embed_dim <= 0) throw ConfigError("toy text encoder: embed_dim must be positive");
        if (max_subword_len == 0) throw ConfigError("toy text encoder: max_subword_len must be >= 1");
    }

    std::vector<TokenSpan> tokenize(const std::string& text) const override {
        std::vector<TokenSpan> tokens;
        tokens.push_back({"<bos>", kBosId, 0, 0});
        for (const WordMatch& w : detail::split_words(text)) {
            for (size_t off = 0; off < w.word.size(); off += max_subword_len_) {
                size_t len = std::min(max_subword_len_, w.word.size() - off);
                TokenSpan t;
                t.text = detail::lower_ascii(w.word.substr(off, len));
                t.id = static_cast<int64_t>(fnv1a64(t.text) % kVocabSize) + 2;
                t.begin = w.begin + off;
                t.end = t.begin + len;
                tokens.push_back(t);
            }
        }
        return tokens;
    }

    Tensor embed(const std::vector<TokenSpan>& tokens) const override {
        Tensor c({static_cast<int64_t>(tokens.size()), embed_dim_});
        double scale = 1.0 / std::sqrt(static_cast<double>(embed_dim_));
        for (size_t i = 0; i < tokens.size(); ++i) {
            Rng row_rng = Rng::from(seed_, static_cast<uint64_t>(tokens[i].id));
            for (int64_t j = 0; j < embed_dim_; ++j)
                c(static_cast<int64_t>(i), j) = scale * row_rng.gaussian();
        }
        return c;
    }

    int64_t embed_dim() const override { return embed_dim_; }

    static constexpr int64_t kBosId = 1;
    static constexpr uint64_t kVocabSize = 1ull << 20;

private:
    int64_t embed_dim_;
    uint64_t seed_;
    size_t max_subword_len_;
};

/// Indices of every token whose span overlaps a selected word's span,
/// sorted ascending and deduplicated.
inline std::vector<int64_t> map_words_to_token_indices(const std::vector<TokenSpan>& tokens,
                                                       const std::vector<WordMatch>& words,
                                                       size_t text_length) {
    std::set<int64_t> indices;
    for (const WordMatch& w : words) {
        if (w.begin > w.end || w.end > text_length)
            throw ValidationError("map_words_to_token_indices: span [" + std::to_string(w.begin) +
                                  "," + std::to_string(w.end) + ") outside text of length " +
                                  std::to_string(text_length));
        for (size_t i = 0; i < tokens.size(); ++i) {
            const TokenSpan& t = tokens[i];
            if (t.begin < w.end && w.begin < t.end) indices.insert(static_cast<int64_t>(i));
        }
    }
    return {indices.begin(), indices.end()};
}

/// Tokenizes, embeds and resolves the supervised token indices for a prompt.
/// Training records require at least one human-centric token; inference
/// prompts pass require_human_indices = false.
inline PromptBundle build_prompt_bundle(const std::string& text, const TextEncoder& encoder,
                                        const HumanWordSelector& selector,
                                        bool require_human_indices = true) {
    PromptBundle bundle;
    bundle.raw_text = text;
    bundle.tokens = encoder.tokenize(text);
    bundle.embeddings = encoder.embed(bundle.tokens);
    if (!text.empty()) {
        auto words = extract_human_centric_words(text, selector);
        bundle.human_indices = map_words_to_token_indices(bundle.tokens, words, text.size());
    }
    if (require_human_indices && bundle.human_indices.empty())
        throw ValidationError("prompt bundle: no human-centric tokens in \"" + text + "\"");
    return bundle;
}

}  // namespace hcp
