#include "lrr/data.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace lrr {

void atomic_write(const std::string& path, const std::string& payload) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        check(f.good(), "atomic_write: cannot open ", tmp);
        f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        check(f.good(), "atomic_write: write failed for ", tmp);
    }
    check(std::rename(tmp.c_str(), path.c_str()) == 0, "atomic_write: rename to ", path,
          " failed");
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string where;

    void need(size_t n) {
        check(pos + n <= buf.size(), where, ": truncated checkpoint (need ", n, " bytes at ",
              pos, ", have ", buf.size(), ")");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void raw(void* dst, size_t n) {
        need(n);
        std::memcpy(dst, buf.data() + pos, n);
        pos += n;
    }
};

std::string read_file(const std::string& path, const char* who) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), who, ": cannot open ", path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return buf;
}

}  // namespace

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["id"] = r.id;
        j["task"] = r.task;
        j["split"] = r.split;
        j["question"] = r.question;
        j["rationale"] = r.rationale;
        j["answer"] = r.answer;
        j["label"] = r.label;
        j["frames"] = r.frames;
        j["seed"] = r.seed;
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_manifest: cannot open ", path);
    std::vector<ManifestRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail("read_manifest: ", path, ":", lineno, ": ", e.what());
        }
        static const std::set<std::string> allowed = {"id",     "task",   "split",
                                                      "question", "rationale", "answer",
                                                      "label",  "frames", "seed"};
        for (auto it = j.begin(); it != j.end(); ++it) {
            check(allowed.count(it.key()) > 0, "read_manifest: ", path, ":", lineno,
                  ": unknown key '", it.key(), "'");
        }
        ManifestRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.task = j.at("task").get<std::string>();
            r.split = j.at("split").get<std::string>();
            r.question = j.value("question", std::string());
            r.rationale = j.at("rationale").get<std::string>();
            r.answer = j.at("answer").get<std::string>();
            r.label = j.value("label", std::string());
            r.frames = j.at("frames").get<std::vector<std::string>>();
            r.seed = j.value("seed", uint64_t(0));
        } catch (const nlohmann::json::exception& e) {
            fail("read_manifest: ", path, ":", lineno, ": ", e.what());
        }
        records.push_back(std::move(r));
    }
    return records;
}

KVMap parse_kv(const std::string& text) {
    KVMap kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const size_t eq = line.find('=', start);
        check(eq != std::string::npos, "parse_kv: line ", lineno, " has no '=': ", line);
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string();
            const size_t b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(start, eq - start));
        check(!key.empty(), "parse_kv: line ", lineno, " has empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string format_kv(const KVMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

KVMap load_kv_file(const std::string& path) { return parse_kv(read_file(path, "load_kv_file")); }

void save_kv_file(const std::string& path, const KVMap& kv) { atomic_write(path, format_kv(kv)); }

std::string kv_get(const KVMap& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

int64_t kv_get_int(const KVMap& kv, const std::string& key, int64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        const int64_t v = std::stoll(it->second, &used);
        check(used == it->second.size(), "");
        return v;
    } catch (...) {
        fail("config key '", key, "' is not an integer: ", it->second);
    }
}

double kv_get_double(const KVMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        const double v = std::stod(it->second, &used);
        check(used == it->second.size(), "");
        return v;
    } catch (...) {
        fail("config key '", key, "' is not a number: ", it->second);
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out;
    out.append("LRR1");
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(ckpt.config.size()));
    for (const auto& [k, v] : ckpt.config) {
        put_str(out, k);
        put_str(out, v);
    }
    put_u32(out, static_cast<uint32_t>(ckpt.params.size()));
    for (const auto& e : ckpt.params) {
        put_str(out, e.name);
        out.push_back(e.dtype == DType::f32 ? '\x00' : '\x01');
        put_u32(out, static_cast<uint32_t>(e.shape.size()));
        for (int d : e.shape) put_u32(out, static_cast<uint32_t>(d));
        const int64_t n = e.numel();
        if (e.dtype == DType::f32) {
            check(static_cast<int64_t>(e.f32.size()) == n, "save_checkpoint: '", e.name,
                  "' payload size mismatch");
            out.append(reinterpret_cast<const char*>(e.f32.data()), static_cast<size_t>(n) * 4);
        } else {
            check(static_cast<int64_t>(e.f64.size()) == n, "save_checkpoint: '", e.name,
                  "' payload size mismatch");
            out.append(reinterpret_cast<const char*>(e.f64.data()), static_cast<size_t>(n) * 8);
        }
    }
    atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string buf = read_file(path, "load_checkpoint");
    Reader r{buf, 0, "load_checkpoint(" + path + ")"};
    r.need(4);
    check(buf.compare(0, 4, "LRR1") == 0, "load_checkpoint: ", path, " has bad magic");
    r.pos = 4;
    const uint32_t version = r.u32();
    check(version == 1, "load_checkpoint: expected version 1, found ", version, " in ", path);
    Checkpoint ckpt;
    const uint32_t n_config = r.u32();
    for (uint32_t i = 0; i < n_config; ++i) {
        std::string k = r.str();
        ckpt.config[k] = r.str();
    }
    const uint32_t n_params = r.u32();
    for (uint32_t i = 0; i < n_params; ++i) {
        CheckpointEntry e;
        e.name = r.str();
        const uint8_t dtype = r.u8();
        check(dtype <= 1, "load_checkpoint: bad dtype tag ", static_cast<int>(dtype), " for '",
              e.name, "'");
        e.dtype = dtype == 0 ? DType::f32 : DType::f64;
        const uint32_t rank = r.u32();
        check(rank <= 8, "load_checkpoint: implausible rank ", rank, " for '", e.name, "'");
        for (uint32_t d = 0; d < rank; ++d) {
            e.shape.push_back(static_cast<int>(r.u32()));
        }
        const int64_t n = e.numel();
        if (e.dtype == DType::f32) {
            e.f32.resize(static_cast<size_t>(n));
            r.raw(e.f32.data(), static_cast<size_t>(n) * 4);
        } else {
            e.f64.resize(static_cast<size_t>(n));
            r.raw(e.f64.data(), static_cast<size_t>(n) * 8);
        }
        ckpt.params.push_back(std::move(e));
    }
    check(r.pos == buf.size(), "load_checkpoint: ", buf.size() - r.pos, " trailing bytes in ",
          path);
    return ckpt;
}

}  // namespace lrr
