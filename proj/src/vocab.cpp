#include "tsqa/vocab.hpp"

#include <cctype>
#include <stdexcept>

namespace tsqa::text {

namespace {

constexpr const char* kPad = "<pad>";
constexpr const char* kUnk = "<unk>";
constexpr const char* kEos = "<eos>";
constexpr const char* kTs = "<ts>";

// Every word any template, prompt, caption, or answer can emit.
constexpr const char* kWords[] = {
    "here",      "is",     "a",        "time",   "series",   "what",   "the",    "overall",
    "trend",     "of",     "this",     "seasonal", "period", "amplitude", "how", "noisy",
    "does",      "contain", "sudden",  "local",  "event",    "at",     "which",  "step",
    "first",     "occur",  "increasing", "decreasing", "steady", "none", "low",  "high",
    "yes",       "no",     "offset",   "scaling", "length",  "max",    "min",    "left",
    "right",     "t",      "mean",     "std",    "spike",    "dip",    "level",  "shift",
    "shake",
};

constexpr char kPunct[] = {':', '?', '[', ']', '|', '=', '.', '-', ',',
                           '<', '>', '(', ')', '+', '/', '%', '_', ';'};

bool is_word_char(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

bool word_like(const std::string& tok) {
    if (tok.empty()) return false;
    if (tok.front() == '<' && tok.back() == '>') return true;  // special markers
    for (char c : tok)
        if (!is_word_char(c)) return false;
    return true;
}

}  // namespace

TextVocab TextVocab::build_default() {
    TextVocab v;
    v.tokens_ = {kPad, kUnk, kEos, kTs};
    for (const char* w : kWords) v.tokens_.push_back(w);
    for (char d = '0'; d <= '9'; ++d) v.tokens_.push_back(std::string(1, d));
    for (char p : kPunct) v.tokens_.push_back(std::string(1, p));
    v.index_tokens();
    return v;
}

TextVocab TextVocab::from_tokens(const std::vector<std::string>& tokens) {
    TextVocab v;
    v.tokens_ = tokens;
    v.index_tokens();
    return v;
}

void TextVocab::index_tokens() {
    ids_.clear();
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
        auto [_, fresh] = ids_.emplace(tokens_[i], i);
        if (!fresh) throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
    auto require = [&](const char* tok) {
        auto it = ids_.find(tok);
        if (it == ids_.end())
            throw std::invalid_argument(std::string("vocabulary missing special token ") + tok);
        return it->second;
    };
    pad_id_ = require(kPad);
    unk_id_ = require(kUnk);
    eos_id_ = require(kEos);
    ts_id_ = require(kTs);
}

const std::string& TextVocab::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

int TextVocab::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? unk_id_ : it->second;
}

std::vector<int> TextVocab::tokenize(const std::string& text) const {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < text.size()) {
        const char c = text[pos];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else if (text.compare(pos, 4, kTs) == 0) {
            out.push_back(ts_id_);
            pos += 4;
        } else if (is_word_char(c)) {
            size_t end = pos;
            std::string word;
            while (end < text.size() && is_word_char(text[end]))
                word.push_back(static_cast<char>(
                    std::tolower(static_cast<unsigned char>(text[end++]))));
            out.push_back(id(word));
            pos = end;
        } else {
            out.push_back(id(std::string(1, c)));
            ++pos;
        }
    }
    if (out.empty()) throw std::invalid_argument("cannot tokenize empty text");
    return out;
}

std::string TextVocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    bool prev_word = false;
    for (int tid : ids) {
        const std::string& tok = token(tid);
        const bool cur_word = word_like(tok);
        if (prev_word && cur_word && !out.empty()) out.push_back(' ');
        out += tok;
        prev_word = cur_word;
    }
    return out;
}

}  // namespace tsqa::text
