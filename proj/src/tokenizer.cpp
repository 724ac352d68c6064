#include "lrr/tokenizer.h"

#include <algorithm>
#include <fstream>
#include <set>

namespace lrr {

namespace {
bool is_split_punct(char c) {
    switch (c) {
        case '(':
        case ')':
        case ',':
        case '.':
        case '?':
        case ':':
        case ';':
        case '!':
            return true;
        default:
            return false;
    }
}

const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> kReserved = {"<bos>", "<eos>", "<pad>", "<img>",
                                                       "<unk>"};
    return kReserved;
}
}  // namespace

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else if (is_split_punct(c)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            out.push_back(std::string(1, c));
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus) {
    check(!corpus.empty(), "build_vocabulary: empty corpus");
    std::set<std::string> words;
    for (const auto& text : corpus) {
        for (auto& w : split_words(text)) words.insert(std::move(w));
    }
    Vocabulary vocab;
    for (const auto& r : reserved_tokens()) vocab.id_to_token.push_back(r);
    for (const auto& w : words) {
        if (std::find(reserved_tokens().begin(), reserved_tokens().end(), w) ==
            reserved_tokens().end()) {
            vocab.id_to_token.push_back(w);
        }
    }
    for (int i = 0; i < vocab.size(); ++i) {
        vocab.token_to_id[vocab.id_to_token[static_cast<size_t>(i)]] = i;
    }
    return vocab;
}

std::vector<int> encode(const Vocabulary& vocab, const std::string& text, EncodeStats* stats) {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) {
        const int id = vocab.id(w);
        ids.push_back(id);
        if (stats) {
            ++stats->total;
            if (id == Vocabulary::kUnk && w != "<unk>") ++stats->unknown;
        }
    }
    return ids;
}

std::string decode(const Vocabulary& vocab, const std::vector<int>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += vocab.token(ids[i]);
    }
    return out;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        check(f.good(), "save_vocabulary: cannot open ", tmp);
        for (const auto& t : vocab.id_to_token) f << t << '\n';
        check(f.good(), "save_vocabulary: write failed for ", tmp);
    }
    check(std::rename(tmp.c_str(), path.c_str()) == 0, "save_vocabulary: rename to ", path,
          " failed");
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_vocabulary: cannot open ", path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        vocab.token_to_id[line] = vocab.size();
        vocab.id_to_token.push_back(line);
    }
    check(vocab.size() >= Vocabulary::kNumReserved, "load_vocabulary: ", path,
          " has fewer lines than reserved tokens");
    for (int i = 0; i < Vocabulary::kNumReserved; ++i) {
        check(vocab.id_to_token[static_cast<size_t>(i)] == reserved_tokens()[static_cast<size_t>(i)],
              "load_vocabulary: reserved token mismatch at id ", i);
    }
    return vocab;
}

InterleavedSequence interleave(const Vocabulary& vocab, const std::vector<Segment>& segments,
                               EncodeStats* stats) {
    check(!segments.empty(), "interleave: empty segment list");
    InterleavedSequence seq;
    seq.items.push_back({false, Vocabulary::kBos});
    int frame = 0;
    for (const auto& seg : segments) {
        if (seg.is_image) {
            seq.items.push_back({true, frame++});
        } else {
            for (int id : encode(vocab, seg.text, stats)) seq.items.push_back({false, id});
        }
    }
    return seq;
}

}  // namespace lrr
