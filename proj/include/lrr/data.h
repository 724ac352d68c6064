// data.h — on-disk formats: JSONL episode manifest, flat key=value config,
// and the versioned "LRR1" checkpoint. All writes go through a temp file and
// an atomic rename.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lrr/common.h"
#include "lrr/optim.h"
#include "lrr/tensor.h"

namespace lrr {

// Writes payload to path via a temp file and an atomic rename.
void atomic_write(const std::string& path, const std::string& payload);

// ---- episode manifest (JSON lines) ----

struct ManifestRecord {
    std::string id;
    std::string task;      // blicket | gridworld | tracking
    std::string split;     // train | val | test
    std::string question;  // may be empty for tasks whose prompt is fixed
    std::string rationale;
    std::string answer;
    std::string label;  // task-specific subset tag for per-subset metrics
    std::vector<std::string> frames;  // paths relative to the manifest dir
    uint64_t seed = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

// ---- flat key=value config ----

using KVMap = std::map<std::string, std::string>;

KVMap parse_kv(const std::string& text);
std::string format_kv(const KVMap& kv);
KVMap load_kv_file(const std::string& path);
void save_kv_file(const std::string& path, const KVMap& kv);

std::string kv_get(const KVMap& kv, const std::string& key, const std::string& fallback);
int64_t kv_get_int(const KVMap& kv, const std::string& key, int64_t fallback);
double kv_get_double(const KVMap& kv, const std::string& key, double fallback);

// ---- checkpoint ----
//
// Layout (little-endian):
//   "LRR1" | u32 version | u32 n_config { u32 klen, k, u32 vlen, v }
//   | u32 n_params { u32 nlen, name, u8 dtype(0=f32,1=f64), u32 rank,
//                    u32 dims[rank], raw values }

struct CheckpointEntry {
    std::string name;
    DType dtype = DType::f32;
    std::vector<int> shape;
    std::vector<float> f32;
    std::vector<double> f64;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

struct Checkpoint {
    KVMap config;
    std::vector<CheckpointEntry> params;

    const CheckpointEntry* find(const std::string& name) const {
        for (const auto& e : params) {
            if (e.name == name) return &e;
        }
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
Checkpoint make_checkpoint(const KVMap& config, const ParamList<T>& params) {
    Checkpoint ckpt;
    ckpt.config = config;
    for (const auto& p : params) {
        CheckpointEntry e;
        e.name = p.name;
        e.dtype = dtype_of<T>();
        e.shape = p.tensor.shape();
        if constexpr (std::is_same_v<T, float>) {
            e.f32 = p.tensor.value();
        } else {
            e.f64 = p.tensor.value();
        }
        ckpt.params.push_back(std::move(e));
    }
    return ckpt;
}

// Copies checkpoint values into an existing parameter list (shapes must
// already match; dtype converts if needed).
template <typename T>
void restore_params(const Checkpoint& ckpt, ParamList<T>& params) {
    for (auto& p : params) {
        const CheckpointEntry* e = ckpt.find(p.name);
        check(e != nullptr, "restore_params: checkpoint missing parameter '", p.name, "'");
        check(e->shape == p.tensor.shape(), "restore_params: shape mismatch for '", p.name,
              "': checkpoint ", shape_str(e->shape), " vs model ", shape_str(p.tensor.shape()));
        auto& dst = p.tensor.value();
        if (e->dtype == DType::f32) {
            check(static_cast<int64_t>(e->f32.size()) == e->numel(), "restore_params: '", p.name,
                  "' has corrupt payload");
            for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e->f32[i]);
        } else {
            check(static_cast<int64_t>(e->f64.size()) == e->numel(), "restore_params: '", p.name,
                  "' has corrupt payload");
            for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e->f64[i]);
        }
    }
}

}  // namespace lrr
