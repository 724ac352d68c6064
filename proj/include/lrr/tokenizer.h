// tokenizer.h — word-level tokenizer over the closed task languages, plus
// interleaved text/image sequences.
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lrr/common.h"

namespace lrr {

struct Vocabulary {
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kPad = 2;
    static constexpr int kImg = 3;
    static constexpr int kUnk = 4;
    static constexpr int kNumReserved = 5;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;

    int size() const { return static_cast<int>(id_to_token.size()); }

    int id(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return token_to_id.count(token) > 0; }

    const std::string& token(int id) const {
        check(id >= 0 && id < size(), "vocabulary: id ", id, " out of range [0, ", size(), ")");
        return id_to_token[static_cast<size_t>(id)];
    }
};

// Splits on whitespace; each of "(),.?:;!" becomes its own token.
std::vector<std::string> split_words(const std::string& text);

// Reserved tokens first, then all corpus tokens sorted lexicographically.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus);

struct EncodeStats {
    int64_t total = 0;
    int64_t unknown = 0;
};

std::vector<int> encode(const Vocabulary& vocab, const std::string& text,
                        EncodeStats* stats = nullptr);

// Joins tokens with single spaces.
std::string decode(const Vocabulary& vocab, const std::vector<int>& ids);

// One token per line, line number = id.
void save_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path);

struct InterleavedItem {
    bool is_image = false;
    int value = 0;  // token id, or frame index for images
};

struct InterleavedSequence {
    std::vector<InterleavedItem> items;

    int size() const { return static_cast<int>(items.size()); }
    int t_s() const {
        int n = 0;
        for (const auto& it : items) n += it.is_image ? 0 : 1;
        return n;
    }
    int t_v() const { return size() - t_s(); }
};

struct Segment {
    bool is_image = false;
    std::string text;
};

inline Segment text_segment(std::string s) { return {false, std::move(s)}; }
inline Segment image_segment() { return {true, {}}; }

// Prepends <bos>; image placeholders become anchors with frame indices in
// order of appearance. Empty text segments contribute nothing.
InterleavedSequence interleave(const Vocabulary& vocab, const std::vector<Segment>& segments,
                               EncodeStats* stats = nullptr);

}  // namespace lrr
