// parse.h — token-stream cursor for the rationale grammars. Parsers work on
// split_words output, so original text and its tokenize/detokenize image
// parse identically.
#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "lrr/attributes.h"
#include "lrr/common.h"
#include "lrr/tokenizer.h"

namespace lrr {

struct TokenCursor {
    std::vector<std::string> toks;
    size_t pos = 0;

    explicit TokenCursor(const std::string& text) : toks(split_words(text)) {}

    bool done() const { return pos >= toks.size(); }
    const std::string& peek(size_t ahead = 0) const {
        check(pos + ahead < toks.size(), "parse: unexpected end of rationale");
        return toks[pos + ahead];
    }
    std::string next() {
        check(!done(), "parse: unexpected end of rationale");
        return toks[pos++];
    }
    void expect(const std::string& word) {
        std::string got = next();
        check(got == word, "parse: expected '", word, "', got '", got, "'");
    }
    void expect_all(std::initializer_list<const char*> words) {
        for (const char* w : words) expect(w);
    }
    bool accept(const std::string& word) {
        if (!done() && peek() == word) {
            ++pos;
            return true;
        }
        return false;
    }
};

inline bool is_integer_token(const std::string& t) {
    return !t.empty() && t.find_first_not_of("0123456789") == std::string::npos;
}

inline int parse_int(TokenCursor& c) {
    const std::string t = c.next();
    check(is_integer_token(t), "parse: expected integer, got '", t, "'");
    return std::stoi(t);
}

namespace detail {
template <typename Table>
int attr_word_index(const std::string& word, const Table& table, const char* what) {
    for (size_t i = 0; i < table.size(); ++i) {
        if (word == table[i]) return static_cast<int>(i);
    }
    fail("parse: unknown ", what, " '", word, "'");
}
}  // namespace detail

// size color material shape, exactly four words.
inline ObjectAttrs parse_attrs(TokenCursor& c) {
    ObjectAttrs a;
    a.size = static_cast<Size>(detail::attr_word_index(c.next(), kSizeNames, "size"));
    a.color = detail::attr_word_index(c.next(), kColorNames, "color");
    a.material = static_cast<Material>(detail::attr_word_index(c.next(), kMaterialNames, "material"));
    a.shape = static_cast<Shape>(detail::attr_word_index(c.next(), kShapeNames, "shape"));
    return a;
}

// "( x , y )"
inline std::pair<int, int> parse_coords(TokenCursor& c) {
    c.expect("(");
    const int x = parse_int(c);
    c.expect(",");
    const int y = parse_int(c);
    c.expect(")");
    return {x, y};
}

}  // namespace lrr
