// lrr — command-line entry points: dataset generation, training, evaluation,
// single-episode generation, and episode inspection.
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "lrr/blicket.h"
#include "lrr/data.h"
#include "lrr/eval.h"
#include "lrr/gridworld.h"
#include "lrr/image.h"
#include "lrr/model.h"
#include "lrr/tracking.h"
#include "lrr/train.h"

namespace fs = std::filesystem;
using namespace lrr;

namespace {

std::string zero_pad(int v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*d", width, v);
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stoi(part));
    return out;
}

TrainExample example_from_record(const ManifestRecord& rec, const fs::path& data_dir,
                                 bool with_frames) {
    TrainExample ex;
    ex.id = rec.id;
    ex.task = rec.task;
    ex.subset = rec.label;
    ex.question = rec.question;
    ex.rationale = rec.rationale;
    ex.answer = rec.answer;
    if (with_frames) {
        for (const std::string& f : rec.frames) ex.images.push_back(load_ppm((data_dir / f).string()));
    }
    return ex;
}

// ---- gen-data ----

struct GenArgs {
    std::string task;
    std::string out;
    std::string camera = "static";  // tracking: static | moving | mixed
    std::string split = "train";
    int n = 100;
    uint64_t seed = 0;
    int image_size = 64;  // blicket and gridworld; tracking frames are fixed
};

int cmd_gen_data(const GenArgs& args) {
    const fs::path out(args.out);
    fs::create_directories(out / "frames");

    std::vector<ManifestRecord> records;
    auto frame_name = [&](const std::string& stem) { return "frames/" + stem + ".ppm"; };

    for (int i = 0; i < args.n; ++i) {
        const uint64_t ep_seed = mix_seed(args.seed, static_cast<uint64_t>(i));
        Rng rng(ep_seed);
        const std::string tag = args.task + "-" + zero_pad(i, 6);

        if (args.task == "blicket") {
            const BlicketEpisode ep = sample_blicket_episode(rng);
            std::vector<std::string> trial_frames;
            for (int k = 0; k < static_cast<int>(ep.queries.size()); ++k) {
                const std::vector<Image> imgs = render_blicket_episode(ep, k, args.image_size);
                if (k == 0) {
                    for (size_t t = 0; t + 1 < imgs.size(); ++t) {
                        const std::string f = frame_name(tag + "-trial" + std::to_string(t));
                        save_ppm((out / f).string(), imgs[t]);
                        trial_frames.push_back(f);
                    }
                }
                const std::string qf = frame_name(tag + "-q" + std::to_string(k));
                save_ppm((out / qf).string(), imgs.back());

                ManifestRecord rec;
                rec.id = tag + "-q" + std::to_string(k);
                rec.task = "blicket";
                rec.split = args.split;
                rec.rationale = blicket_rationale(ep, k);
                rec.answer = ep.queries[static_cast<size_t>(k)].answer;
                rec.label = ep.queries[static_cast<size_t>(k)].type;
                rec.frames = trial_frames;
                rec.frames.push_back(qf);
                rec.seed = ep_seed;
                records.push_back(std::move(rec));
            }
        } else if (args.task == "gridworld") {
            GridworldConfig cfg;
            cfg.image_size = args.image_size;
            const GridworldEpisode ep = sample_gridworld_episode(rng, cfg);
            const std::string f = frame_name(tag);
            save_ppm((out / f).string(), render_scene(ep.scene, args.image_size));

            ManifestRecord rec;
            rec.id = tag;
            rec.task = "gridworld";
            rec.split = args.split;
            rec.question = ep.question;
            rec.rationale = ep.rationale;
            rec.answer = ep.answer;
            rec.label = ep.program.family;
            rec.frames = {f};
            rec.seed = ep_seed;
            records.push_back(std::move(rec));
        } else if (args.task == "tracking") {
            TrackingConfig cfg;
            if (args.camera == "mixed") {
                cfg.camera = (i % 2 == 0) ? CameraMode::static_cam : CameraMode::moving_cam;
            } else {
                cfg.camera = camera_from_name(args.camera);
            }
            const TrackingEpisode ep = sample_episode(rng, cfg);
            const std::vector<Image> frames = render_frames(ep);

            ManifestRecord rec;
            rec.id = tag;
            rec.task = "tracking";
            rec.split = args.split;
            rec.rationale = episode_rationale(ep);
            rec.answer = std::to_string(ep.answer);
            rec.label = camera_name(ep.camera);
            for (size_t t = 0; t < frames.size(); ++t) {
                const std::string f = frame_name(tag + "-f" + zero_pad(static_cast<int>(t), 2));
                save_ppm((out / f).string(), frames[t]);
                rec.frames.push_back(f);
            }
            rec.seed = ep_seed;
            records.push_back(std::move(rec));
        } else {
            fail("gen-data: unknown task '", args.task, "'");
        }
    }

    write_manifest((out / "manifest.jsonl").string(), records);

    std::vector<TrainExample> text_only;
    text_only.reserve(records.size());
    for (const ManifestRecord& rec : records) text_only.push_back(example_from_record(rec, out, false));
    save_vocabulary((out / "vocab.txt").string(), build_train_vocabulary(text_only));

    KVMap gen;
    gen["task"] = args.task;
    gen["n"] = std::to_string(args.n);
    gen["seed"] = std::to_string(args.seed);
    gen["split"] = args.split;
    gen["image_size"] = std::to_string(args.image_size);
    if (args.task == "tracking") gen["camera"] = args.camera;
    save_kv_file((out / "gen.kv").string(), gen);

    std::cout << "wrote " << records.size() << " records to " << args.out << "\n";
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;  // optional key=value file; flags override
    std::string mode = "full";
    std::string init_ckpt;
    int steps = 20000;
    double lr = 1e-5;
    uint64_t seed = 0;
    double jitter_p = 0.25;
    int layers = 4;
    int dim = 128;
    int heads = 4;
    int max_seq = 640;
    int save_every = 0;  // 0 = final checkpoint only
    int limit = 0;       // 0 = all episodes
};

void apply_config_file(TrainArgs& a, const CLI::App& cmd) {
    const KVMap kv = load_kv_file(a.config);
    auto flag_given = [&](const std::string& name) { return cmd.count(name) > 0; };
    if (!flag_given("--steps")) a.steps = static_cast<int>(kv_get_int(kv, "steps", a.steps));
    if (!flag_given("--lr")) a.lr = kv_get_double(kv, "lr", a.lr);
    if (!flag_given("--mode")) a.mode = kv_get(kv, "mode", a.mode);
    if (!flag_given("--seed"))
        a.seed = static_cast<uint64_t>(kv_get_int(kv, "seed", static_cast<int64_t>(a.seed)));
    if (!flag_given("--jitter-p")) a.jitter_p = kv_get_double(kv, "jitter_p", a.jitter_p);
    if (!flag_given("--layers")) a.layers = static_cast<int>(kv_get_int(kv, "layers", a.layers));
    if (!flag_given("--dim")) a.dim = static_cast<int>(kv_get_int(kv, "dim", a.dim));
    if (!flag_given("--heads")) a.heads = static_cast<int>(kv_get_int(kv, "heads", a.heads));
    if (!flag_given("--max-seq")) a.max_seq = static_cast<int>(kv_get_int(kv, "max_seq", a.max_seq));
    if (!flag_given("--save-every"))
        a.save_every = static_cast<int>(kv_get_int(kv, "save_every", a.save_every));
    if (!flag_given("--limit")) a.limit = static_cast<int>(kv_get_int(kv, "limit", a.limit));
}

KVMap checkpoint_config(const ModelConfig& mc, const TrainArgs& args) {
    KVMap kv;
    kv["layers"] = std::to_string(mc.m);
    kv["dim"] = std::to_string(mc.q);
    kv["heads"] = std::to_string(mc.heads);
    kv["cross_k"] = std::to_string(mc.k);
    kv["vocab"] = std::to_string(mc.vocab);
    kv["max_seq"] = std::to_string(mc.max_seq);
    kv["image_size"] = std::to_string(mc.vision.image_size);
    kv["channels"] = join_ints(mc.vision.channels);
    kv["strides"] = join_ints(mc.vision.strides);
    kv["qprime"] = std::to_string(mc.vision.qprime);
    kv["pos_dim"] = std::to_string(mc.vision.pos_dim);
    kv["max_frames"] = std::to_string(mc.vision.max_frames);
    kv["mode"] = args.mode;
    kv["jitter_p"] = std::to_string(args.jitter_p);
    kv["lr"] = std::to_string(args.lr);
    kv["seed"] = std::to_string(args.seed);
    return kv;
}

ModelConfig config_from_checkpoint(const KVMap& kv) {
    ModelConfig mc;
    mc.m = static_cast<int>(kv_get_int(kv, "layers", mc.m));
    mc.q = static_cast<int>(kv_get_int(kv, "dim", mc.q));
    mc.heads = static_cast<int>(kv_get_int(kv, "heads", mc.heads));
    mc.k = static_cast<int>(kv_get_int(kv, "cross_k", mc.k));
    mc.vocab = static_cast<int>(kv_get_int(kv, "vocab", mc.vocab));
    mc.max_seq = static_cast<int>(kv_get_int(kv, "max_seq", mc.max_seq));
    mc.vision.image_size = static_cast<int>(kv_get_int(kv, "image_size", mc.vision.image_size));
    mc.vision.channels = split_ints(kv_get(kv, "channels", join_ints(mc.vision.channels)));
    mc.vision.strides = split_ints(kv_get(kv, "strides", join_ints(mc.vision.strides)));
    mc.vision.qprime = static_cast<int>(kv_get_int(kv, "qprime", mc.vision.qprime));
    mc.vision.pos_dim = static_cast<int>(kv_get_int(kv, "pos_dim", mc.vision.pos_dim));
    mc.vision.max_frames = static_cast<int>(kv_get_int(kv, "max_frames", mc.vision.max_frames));
    return mc;
}

int cmd_train(const TrainArgs& args) {
    const fs::path data(args.data);
    const fs::path out(args.out);
    fs::create_directories(out);

    std::vector<ManifestRecord> records = read_manifest((data / "manifest.jsonl").string());
    if (args.limit > 0 && static_cast<int>(records.size()) > args.limit)
        records.resize(static_cast<size_t>(args.limit));
    check(!records.empty(), "train: empty dataset");
    const Vocabulary vocab = load_vocabulary((data / "vocab.txt").string());

    // The frame raster fixes the vision geometry.
    const Image probe = load_ppm((data / records[0].frames.at(0)).string());
    check(probe.w == probe.h, "train: non-square frames (", probe.w, "x", probe.h, ")");

    ModelConfig mc;
    mc.m = args.layers;
    mc.q = args.dim;
    mc.heads = args.heads;
    mc.vocab = vocab.size();
    mc.max_seq = args.max_seq;
    mc.vision.image_size = probe.w;

    TrainConfig cfg;
    cfg.lr = args.lr;
    cfg.steps = args.steps;
    cfg.seed = args.seed;
    cfg.rationale_mode = rationale_mode_from_name(args.mode);
    cfg.jitter_p = args.jitter_p;
    cfg.validate();

    Rng init_rng(mix_seed(args.seed, 0x5eedu));
    LrrModel<float> model(mc, init_rng);
    if (!args.init_ckpt.empty()) restore_params(load_checkpoint(args.init_ckpt), model.params());

    const KVMap ckpt_cfg = checkpoint_config(mc, args);
    auto save_model = [&](const std::string& name) {
        save_checkpoint((out / name).string(), make_checkpoint<float>(ckpt_cfg, model.params()));
    };

    auto provider = [&](int i) {
        return example_from_record(records[static_cast<size_t>(i)], data, true);
    };

    const std::string log_partial = (out / "train_log.csv.partial").string();
    std::ofstream log(log_partial, std::ios::binary);
    check(log.good(), "train: cannot open ", log_partial);

    auto on_step = [&](int step, const StepStats& stats) {
        if (step % 500 == 0 || step == args.steps) {
            std::cout << "step " << step << "/" << args.steps << " loss " << stats.loss
                      << " grad_norm " << stats.grad_norm << std::endl;
            log.flush();
        }
        if (args.save_every > 0 && step % args.save_every == 0 && step < args.steps)
            save_model("model_step" + zero_pad(step, 6) + ".ckpt");
    };

    train_loop(model, provider, static_cast<int>(records.size()), vocab, cfg, &log, on_step);

    log.close();
    check(std::rename(log_partial.c_str(), (out / "train_log.csv").string().c_str()) == 0,
          "train: rename of train_log.csv failed");
    save_model("model.ckpt");
    save_vocabulary((out / "vocab.txt").string(), vocab);
    std::cout << "wrote " << (out / "model.ckpt").string() << "\n";
    return 0;
}

// ---- eval / generate ----

struct LoadedModel {
    ModelConfig mc;
    LrrModel<float> model;
    Vocabulary vocab;
};

LoadedModel load_model(const std::string& ckpt_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    LoadedModel lm;
    lm.mc = config_from_checkpoint(ckpt.config);
    Rng rng(1);
    lm.model = LrrModel<float>(lm.mc, rng);
    restore_params(ckpt, lm.model.params());
    fs::path vocab_path = fs::path(ckpt_path).parent_path() / "vocab.txt";
    lm.vocab = load_vocabulary(vocab_path.string());
    check(lm.vocab.size() == lm.mc.vocab, "eval: vocabulary ", vocab_path.string(), " has ",
          lm.vocab.size(), " tokens but the checkpoint was trained with ", lm.mc.vocab);
    return lm;
}

int eval_threads() {
    const char* env = std::getenv("LRR_THREADS");
    if (!env || !*env) return 1;
    const int n = std::atoi(env);
    check(n >= 1, "LRR_THREADS must be >= 1, got '", env, "'");
    return n;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string report;
    int limit = 0;
    int max_new = 320;
};

int cmd_eval(const EvalArgs& args) {
    const LoadedModel lm = load_model(args.ckpt);
    const fs::path data(args.data);
    std::vector<ManifestRecord> records = read_manifest((data / "manifest.jsonl").string());
    if (args.limit > 0 && static_cast<int>(records.size()) > args.limit)
        records.resize(static_cast<size_t>(args.limit));
    check(!records.empty(), "eval: empty dataset");

    const int n = static_cast<int>(records.size());
    std::vector<PredictionRecord> preds(static_cast<size_t>(n));
    std::vector<GoldRecord> golds(static_cast<size_t>(n));

    const int n_threads = std::min(eval_threads(), n);
    std::atomic<int> next{0}, done{0};
    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            const TrainExample ex = example_from_record(records[static_cast<size_t>(i)], data, true);
            preds[static_cast<size_t>(i)] = evaluate_example(lm.model, lm.vocab, ex, args.max_new);
            golds[static_cast<size_t>(i)] = gold_of(ex);
            const int d = done.fetch_add(1) + 1;
            if (d % 100 == 0) std::cerr << "evaluated " << d << "/" << n << "\n";
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    const Metrics m = compute_metrics(preds, golds);
    const fs::path report(args.report);
    fs::create_directories(report);
    atomic_write((report / "metrics.csv").string(), metrics_csv(m));
    write_prediction_dump((report / "predictions.jsonl").string(), preds, golds);
    std::cout << metrics_csv(m);
    return 0;
}

struct EpisodeArgs {
    std::string ckpt;
    std::string data;
    std::string id;
    int max_new = 320;
};

const ManifestRecord& find_record(const std::vector<ManifestRecord>& records,
                                  const std::string& id) {
    for (const ManifestRecord& rec : records) {
        if (rec.id == id) return rec;
    }
    fail("episode id '", id, "' not found in manifest");
}

int cmd_generate(const EpisodeArgs& args) {
    const LoadedModel lm = load_model(args.ckpt);
    const fs::path data(args.data);
    const std::vector<ManifestRecord> records = read_manifest((data / "manifest.jsonl").string());
    const TrainExample ex = example_from_record(find_record(records, args.id), data, true);
    const PredictionRecord rec = evaluate_example(lm.model, lm.vocab, ex, args.max_new);
    std::cout << rec.generated << "\n";
    return 0;
}

int cmd_inspect(const std::string& data_dir, const std::string& id) {
    const fs::path data(data_dir);
    const std::vector<ManifestRecord> records = read_manifest((data / "manifest.jsonl").string());
    const ManifestRecord& rec = find_record(records, id);
    std::cout << "id: " << rec.id << "\ntask: " << rec.task << "\nsplit: " << rec.split
              << "\nsubset: " << rec.label << "\n";
    if (!rec.question.empty()) std::cout << "question: " << rec.question << "\n";
    std::cout << "rationale: " << rec.rationale << "\nanswer: " << rec.answer << "\n";
    for (size_t t = 0; t < rec.frames.size(); ++t) {
        const Image img = load_ppm((data / rec.frames[t]).string());
        double mean[3] = {0, 0, 0};
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < img.h; ++y) {
                for (int x = 0; x < img.w; ++x) mean[c] += img.at(c, y, x);
            }
            mean[c] /= static_cast<double>(img.h) * img.w;
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf), "frame %zu: %s %dx%d mean rgb (%.3f, %.3f, %.3f)", t,
                      rec.frames[t].c_str(), img.w, img.h, mean[0], mean[1], mean[2]);
        std::cout << buf << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lrr — Look, Remember, Reason: tasks, training, evaluation"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* c_gen = app.add_subcommand("gen-data", "Generate an episode dataset");
    c_gen->add_option("--task", gen.task, "blicket | gridworld | tracking")->required();
    c_gen->add_option("--n", gen.n, "number of episodes")->required();
    c_gen->add_option("--seed", gen.seed, "generator seed");
    c_gen->add_option("--out", gen.out, "output directory")->required();
    c_gen->add_option("--camera", gen.camera, "tracking camera: static | moving | mixed");
    c_gen->add_option("--image-size", gen.image_size, "frame size for blicket and gridworld");
    c_gen->add_option("--split", gen.split, "split tag stored in the manifest");

    TrainArgs tr;
    CLI::App* c_train = app.add_subcommand("train", "Train a model on a dataset");
    c_train->add_option("--data", tr.data, "dataset directory")->required();
    c_train->add_option("--out", tr.out, "output directory")->required();
    c_train->add_option("--config", tr.config, "key=value config file; flags override");
    c_train->add_option("--steps", tr.steps, "optimizer steps");
    c_train->add_option("--lr", tr.lr, "learning rate");
    c_train->add_option("--mode", tr.mode, "full | answer_only | object_list_only");
    c_train->add_option("--seed", tr.seed, "training seed");
    c_train->add_option("--jitter-p", tr.jitter_p, "tracking input jitter probability");
    c_train->add_option("--layers", tr.layers, "transformer layers");
    c_train->add_option("--dim", tr.dim, "embedding dim");
    c_train->add_option("--heads", tr.heads, "attention heads");
    c_train->add_option("--max-seq", tr.max_seq, "maximum stream length");
    c_train->add_option("--save-every", tr.save_every, "checkpoint snapshot interval");
    c_train->add_option("--limit", tr.limit, "use only the first N episodes");
    c_train->add_option("--init-ckpt", tr.init_ckpt, "initialize parameters from a checkpoint");

    EvalArgs ev;
    CLI::App* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    c_eval->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
    c_eval->add_option("--data", ev.data, "dataset directory")->required();
    c_eval->add_option("--report", ev.report, "report directory")->required();
    c_eval->add_option("--limit", ev.limit, "evaluate only the first N episodes");
    c_eval->add_option("--max-new", ev.max_new, "generation budget per episode");

    EpisodeArgs ge;
    CLI::App* c_generate = app.add_subcommand("generate", "Print the model rationale for one episode");
    c_generate->add_option("--ckpt", ge.ckpt, "checkpoint file")->required();
    c_generate->add_option("--data", ge.data, "dataset directory")->required();
    c_generate->add_option("--id", ge.id, "episode id")->required();
    c_generate->add_option("--max-new", ge.max_new, "generation budget");

    std::string ins_data, ins_id;
    CLI::App* c_inspect = app.add_subcommand("inspect", "Print an episode's gold rationale and frames");
    c_inspect->add_option("--data", ins_data, "dataset directory")->required();
    c_inspect->add_option("--id", ins_id, "episode id")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_gen->parsed()) return cmd_gen_data(gen);
        if (c_train->parsed()) {
            if (!tr.config.empty()) apply_config_file(tr, *c_train);
            return cmd_train(tr);
        }
        if (c_eval->parsed()) return cmd_eval(ev);
        if (c_generate->parsed()) return cmd_generate(ge);
        if (c_inspect->parsed()) return cmd_inspect(ins_data, ins_id);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
