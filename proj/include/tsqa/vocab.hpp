#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace tsqa::text {

// Closed vocabulary over everything the pipeline ever renders: question and
// context templates, stats prompts, patch captions, and answers. Ids are
// dense in [0, size). Unknown input maps to <unk> rather than erroring so
// that free-form question text stays usable at inference.
class TextVocab {
public:
    // The full fixed vocabulary: specials, template words, digits,
    // punctuation. Build order (and therefore every id) is stable.
    static TextVocab build_default();
    // Rebuild from a serialized token list (checkpoint load). The list must
    // contain the four specials and no duplicates.
    static TextVocab from_tokens(const std::vector<std::string>& tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(int id) const;
    // Id of an exact token string; unknown strings resolve to unk_id().
    int id(const std::string& token) const;
    bool contains(const std::string& token) const { return ids_.count(token) != 0; }

    int pad_id() const { return pad_id_; }
    int unk_id() const { return unk_id_; }
    int eos_id() const { return eos_id_; }
    int ts_id() const { return ts_id_; }

    // Greedy left-to-right scan: the exact substring "<ts>" becomes the
    // series placeholder token, letter runs become lowercased words, digits
    // and punctuation become single-character tokens, whitespace separates.
    // Anything outside the vocabulary becomes <unk>. Errors on empty or
    // all-whitespace text.
    std::vector<int> tokenize(const std::string& text) const;
    // Inverse rendering: adjacent word tokens are joined with single spaces,
    // digits and punctuation attach without spacing.
    std::string detokenize(const std::vector<int>& ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    int pad_id_ = -1;
    int unk_id_ = -1;
    int eos_id_ = -1;
    int ts_id_ = -1;

    void index_tokens();
};

}  // namespace tsqa::text
