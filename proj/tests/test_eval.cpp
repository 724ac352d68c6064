#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lrr/eval.h"
#include "lrr/train.h"

using namespace lrr;

namespace {

ModelConfig tiny_config(int vocab, int image_size, int max_seq = 256) {
    ModelConfig cfg;
    cfg.m = 2;
    cfg.q = 32;
    cfg.heads = 2;
    cfg.vocab = vocab;
    cfg.max_seq = max_seq;
    cfg.vision.image_size = image_size;
    cfg.vision.channels = {8, 8, 16, 16};
    cfg.vision.qprime = 16;
    return cfg;
}

Image test_image(int size, uint64_t seed) {
    Rng rng(seed);
    Image img = Image::filled(size, size, {0.1f, 0.2f, 0.3f});
    for (int k = 0; k < 6; ++k) {
        const int cy = rng.uniform_int(2, size - 3);
        const int cx = rng.uniform_int(2, size - 3);
        img.fill_circle(cy, cx, 2,
                        {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                         static_cast<float>(rng.uniform())});
    }
    return img;
}

InterleavedSequence mixed_sequence(int vocab, Rng& rng) {
    InterleavedSequence seq;
    seq.items.push_back({false, Vocabulary::kBos});
    seq.items.push_back({true, 0});
    for (int i = 0; i < 3; ++i) {
        seq.items.push_back({false, rng.uniform_int(Vocabulary::kNumReserved, vocab - 1)});
    }
    seq.items.push_back({true, 1});
    for (int i = 0; i < 4; ++i) {
        seq.items.push_back({false, rng.uniform_int(Vocabulary::kNumReserved, vocab - 1)});
    }
    return seq;
}

std::string temp_path(const std::string& name) {
    return std::string("/tmp/lrr_eval_test_") + name;
}

}  // namespace

TEST_CASE("decode session reproduces forward_stream logits exactly") {
    const int vocab = 24, image_size = 32;
    Rng rng(404);
    LrrModel<float> model(tiny_config(vocab, image_size), rng);

    std::vector<Image> images = {test_image(image_size, 1), test_image(image_size, 2)};
    InterleavedSequence seq = mixed_sequence(vocab, rng);
    StreamForward<float> sf = model.forward_stream(seq, images);
    REQUIRE(sf.logits.dim(0) == seq.size());
    REQUIRE(sf.logits.dim(1) == vocab);

    DecodeSession ses(model, images);
    for (int s = 0; s < seq.size(); ++s) {
        ses.push(seq.items[static_cast<size_t>(s)]);
        const std::vector<float>& lg = ses.logits();
        REQUIRE(static_cast<int>(lg.size()) == vocab);
        for (int v = 0; v < vocab; ++v) {
            CHECK(lg[static_cast<size_t>(v)] ==
                  sf.logits.value()[static_cast<size_t>(s) * vocab + v]);
        }
    }
    CHECK(ses.size() == seq.size());
}

TEST_CASE("decode session matches the text-only path without images") {
    const int vocab = 24;
    Rng rng(405);
    LrrModel<float> model(tiny_config(vocab, 32), rng);

    InterleavedSequence seq;
    seq.items.push_back({false, Vocabulary::kBos});
    for (int i = 0; i < 7; ++i) {
        seq.items.push_back({false, rng.uniform_int(Vocabulary::kNumReserved, vocab - 1)});
    }
    StreamForward<float> sf = model.forward_stream(seq, {});

    DecodeSession ses(model, {});
    for (int s = 0; s < seq.size(); ++s) {
        ses.push(seq.items[static_cast<size_t>(s)]);
        const std::vector<float>& lg = ses.logits();
        for (int v = 0; v < vocab; ++v) {
            CHECK(lg[static_cast<size_t>(v)] ==
                  sf.logits.value()[static_cast<size_t>(s) * vocab + v]);
        }
    }
}

TEST_CASE("decode session guards") {
    const int vocab = 24;
    Rng rng(406);
    LrrModel<float> model(tiny_config(vocab, 32, 8), rng);

    DecodeSession fresh(model, {});
    CHECK_THROWS_WITH_AS(fresh.logits(), doctest::Contains("no positions"), Error);
    CHECK_THROWS_WITH_AS(fresh.push({true, 0}), doctest::Contains("only 0 images"), Error);
    CHECK_THROWS_WITH_AS(fresh.push({false, vocab + 3}), doctest::Contains("outside vocab"),
                         Error);
    for (int s = 0; s < 8; ++s) fresh.push({false, Vocabulary::kBos});
    CHECK_THROWS_WITH_AS(fresh.push({false, Vocabulary::kBos}),
                         doctest::Contains("exceeds max_seq"), Error);
}

TEST_CASE("generate equals a naive greedy loop over forward_stream") {
    const int vocab = 24, image_size = 32;
    Rng rng(407);
    LrrModel<float> model(tiny_config(vocab, image_size), rng);
    std::vector<Image> images = {test_image(image_size, 3)};

    InterleavedSequence prompt;
    prompt.items.push_back({false, Vocabulary::kBos});
    prompt.items.push_back({true, 0});
    prompt.items.push_back({false, 7});

    const int budget = 12;
    GenerateResult fast = generate(model, prompt, images, budget);

    InterleavedSequence seq = prompt;
    std::vector<int> slow;
    bool slow_truncated = true;
    for (int i = 0; i < budget; ++i) {
        StreamForward<float> sf = model.forward_stream(seq, images);
        const float* row =
            sf.logits.value().data() + static_cast<size_t>(seq.size() - 1) * vocab;
        int best = 0;
        for (int v = 1; v < vocab; ++v) {
            if (row[v] > row[best]) best = v;
        }
        if (best == Vocabulary::kEos) {
            slow_truncated = false;
            break;
        }
        slow.push_back(best);
        seq.items.push_back({false, best});
    }
    CHECK(fast.tokens == slow);
    CHECK(fast.truncated == slow_truncated);
    CHECK(fast.logits.size() >= fast.tokens.size());

    // Prefix stability and the zero-budget case.
    GenerateResult shorter = generate(model, prompt, images, 5);
    const size_t upto = std::min<size_t>(5, fast.tokens.size());
    REQUIRE(shorter.tokens.size() == upto);
    for (size_t i = 0; i < upto; ++i) CHECK(shorter.tokens[i] == fast.tokens[i]);
    GenerateResult none = generate(model, prompt, images, 0);
    CHECK(none.tokens.empty());
    CHECK(none.truncated);
}

TEST_CASE("extract_answer per task grammar") {
    // Published blicket ending.
    CHECK(extract_answer("Trial 6 with objects: go on. Will o1, o5 activate the blicket? No.",
                         "blicket") == "No");
    // Published gridworld ending.
    CHECK(extract_answer("there are 2 such objects. The answer is, 2.", "gridworld") == "2");
    CHECK(extract_answer("The answer is, large.", "gridworld") == "large");
    // Tracking: answer sentence, then the final-tuple fallback.
    CHECK(extract_answer("(14,20) (14,14) The answer is, 15.", "tracking") == "15");
    CHECK(extract_answer("(14,20) (15,21)", "tracking") == "15");
    CHECK(extract_answer("(14,20) The answer is, 99.", "tracking") == "14");
    // Failures.
    CHECK(extract_answer("complete nonsense text", "blicket").empty());
    CHECK(extract_answer("complete nonsense text", "gridworld").empty());
    CHECK(extract_answer("complete nonsense text", "tracking").empty());
    CHECK(extract_answer("activate the blicket? .", "blicket").empty());
    CHECK(extract_answer("The answer is, .", "gridworld").empty());
    CHECK_THROWS_WITH_AS(extract_answer("x", "sudoku"), doctest::Contains("unknown task"), Error);

    // The last occurrence wins.
    CHECK(extract_answer("The answer is, 3. The answer is, 4.", "gridworld") == "4");
}

TEST_CASE("extract_answer recovers the gold answer from serialized rationales") {
    Rng rng(2025);
    for (int i = 0; i < 40; ++i) {
        GridworldEpisode ep = sample_gridworld_episode(rng, {});
        CHECK(extract_answer(ep.rationale, "gridworld") == ep.answer);
        CHECK(extract_answer(gridworld_object_list_rationale(ep.rationale), "gridworld") ==
              ep.answer);
    }
    for (int i = 0; i < 40; ++i) {
        BlicketEpisode ep = sample_blicket_episode(rng);
        for (size_t qi = 0; qi < ep.queries.size(); ++qi) {
            const std::string r = blicket_rationale(ep, static_cast<int>(qi));
            CHECK(extract_answer(r, "blicket") == ep.queries[qi].answer);
            CHECK(extract_answer(blicket_object_list_rationale(r), "blicket") ==
                  ep.queries[qi].answer);
        }
    }
    for (int i = 0; i < 40; ++i) {
        TrackingEpisode ep = sample_episode(rng);
        const std::string r = episode_rationale(ep);
        CHECK(extract_answer(r, "tracking") == std::to_string(ep.answer));
        CHECK(extract_answer(tracking_object_list_rationale(r), "tracking") ==
              std::to_string(ep.answer));
    }
}

TEST_CASE("compute_metrics hand cases") {
    std::vector<PredictionRecord> preds;
    std::vector<GoldRecord> golds;

    // Two gridworld records, one correct.
    preds.push_back({"g1", "gridworld", "exist", "text", "yes", false, {}});
    golds.push_back({"g1", "gridworld", "exist", "yes"});
    preds.push_back({"g2", "gridworld", "count-with-union", "text", "3", false, {}});
    golds.push_back({"g2", "gridworld", "count-with-union", "2"});

    // Tracking: corner-to-corner miss with gold ranked 4th in the distribution.
    std::vector<float> probs4(static_cast<size_t>(kGridCells), 0.001f);
    probs4[0] = 0.4f;   // predicted cell
    probs4[1] = 0.2f;
    probs4[2] = 0.1f;
    probs4[35] = 0.05f;  // gold, ranked 4th
    preds.push_back({"t1", "tracking", "static", "text", "0", false, probs4});
    golds.push_back({"t1", "tracking", "static", "35"});

    // Tracking: exact hit, gold ranked 1st.
    std::vector<float> probs1(static_cast<size_t>(kGridCells), 0.001f);
    probs1[14] = 0.9f;
    preds.push_back({"t2", "tracking", "moving", "text", "14", false, probs1});
    golds.push_back({"t2", "tracking", "moving", "14"});

    // Tracking: unparseable prediction.
    preds.push_back({"t3", "tracking", "static", "text", "", true, {}});
    golds.push_back({"t3", "tracking", "static", "7"});

    Metrics m = compute_metrics(preds, golds);
    CHECK(m.n == 5);
    CHECK(m.n_tracking == 3);
    CHECK(m.accuracy == doctest::Approx(2.0 / 5.0));
    CHECK(m.top1 == doctest::Approx(1.0 / 3.0));
    CHECK(m.top5 == doctest::Approx(2.0 / 3.0));  // ranked 4th counts toward top5, not top1
    CHECK(m.l1_grid == doctest::Approx((10.0 + 0.0 + 10.0) / 3.0));
    CHECK(m.subset_accuracy.at("exist") == doctest::Approx(1.0));
    CHECK(m.subset_accuracy.at("count-with-union") == doctest::Approx(0.0));
    CHECK(m.subset_accuracy.at("static") == doctest::Approx(0.0));
    CHECK(m.subset_accuracy.at("moving") == doctest::Approx(1.0));
    CHECK(m.subset_counts.at("static") == 2);
    CHECK(m.top5 >= m.top1);

    // Permutation invariance.
    std::vector<size_t> perm = {4, 2, 0, 3, 1};
    std::vector<PredictionRecord> p2;
    std::vector<GoldRecord> g2;
    for (size_t i : perm) {
        p2.push_back(preds[i]);
        g2.push_back(golds[i]);
    }
    Metrics m2 = compute_metrics(p2, g2);
    CHECK(m2.accuracy == m.accuracy);
    CHECK(m2.top1 == m.top1);
    CHECK(m2.top5 == m.top5);
    CHECK(m2.l1_grid == m.l1_grid);
    CHECK(m2.subset_accuracy == m.subset_accuracy);
    CHECK(m2.subset_counts == m.subset_counts);

    // Errors: length mismatch, id mismatch, bad gold cell.
    std::vector<GoldRecord> short_golds(golds.begin(), golds.end() - 1);
    CHECK_THROWS_WITH_AS(compute_metrics(preds, short_golds),
                         doctest::Contains("predictions vs"), Error);
    std::vector<GoldRecord> swapped = golds;
    std::swap(swapped[0].id, swapped[1].id);
    CHECK_THROWS_WITH_AS(compute_metrics(preds, swapped), doctest::Contains("pairs prediction"),
                         Error);
    std::vector<GoldRecord> badcell = golds;
    badcell[2].answer = "sky";
    CHECK_THROWS_WITH_AS(compute_metrics(preds, badcell), doctest::Contains("not a grid cell"),
                         Error);
}

TEST_CASE("prediction dump round-trips and reproduces the metrics CSV") {
    std::vector<PredictionRecord> preds;
    std::vector<GoldRecord> golds;
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        PredictionRecord p;
        GoldRecord g;
        p.id = g.id = "ep" + std::to_string(i);
        p.task = g.task = i % 2 == 0 ? "tracking" : "gridworld";
        p.subset = g.subset = i % 2 == 0 ? "static" : "exist";
        g.answer = p.task == "tracking" ? std::to_string(i) : "yes";
        p.answer = i % 3 == 0 ? g.answer : (p.task == "tracking" ? "35" : "no");
        p.generated = "some generated text ( with , punctuation ) .";
        p.truncated = i % 5 == 0;
        if (p.task == "tracking") {
            std::vector<float> probs(static_cast<size_t>(kGridCells));
            double denom = 0;
            for (int c = 0; c < kGridCells; ++c) {
                probs[static_cast<size_t>(c)] = static_cast<float>(rng.uniform());
                denom += probs[static_cast<size_t>(c)];
            }
            for (int c = 0; c < kGridCells; ++c) {
                probs[static_cast<size_t>(c)] /= static_cast<float>(denom);
            }
            p.cell_probs = probs;
        }
        preds.push_back(std::move(p));
        golds.push_back(std::move(g));
    }

    const std::string path = temp_path("dump.jsonl");
    write_prediction_dump(path, preds, golds);
    auto [rp, rg] = read_prediction_dump(path);
    REQUIRE(rp.size() == preds.size());
    for (size_t i = 0; i < preds.size(); ++i) {
        CHECK(rp[i].id == preds[i].id);
        CHECK(rp[i].task == preds[i].task);
        CHECK(rp[i].subset == preds[i].subset);
        CHECK(rp[i].generated == preds[i].generated);
        CHECK(rp[i].answer == preds[i].answer);
        CHECK(rp[i].truncated == preds[i].truncated);
        CHECK(rp[i].cell_probs == preds[i].cell_probs);
        CHECK(rg[i].answer == golds[i].answer);
    }
    CHECK(metrics_csv(compute_metrics(rp, rg)) == metrics_csv(compute_metrics(preds, golds)));
    std::remove(path.c_str());

    const std::string bad = temp_path("bad.jsonl");
    {
        std::ofstream f(bad);
        f << "{\"id\":\"x\",\"task\":\"gridworld\",\"subset\":\"s\",\"generated\":\"\","
             "\"answer\":\"a\",\"gold\":\"a\",\"correct\":true,\"truncated\":false,"
             "\"extra_key\":1}\n";
    }
    CHECK_THROWS_WITH_AS(read_prediction_dump(bad), doctest::Contains("unknown key"), Error);
    std::remove(bad.c_str());
}

TEST_CASE("run_ablation reports paired metrics and deltas") {
    std::vector<PredictionRecord> full, ablated;
    std::vector<GoldRecord> golds;
    for (int i = 0; i < 10; ++i) {
        GoldRecord g{"e" + std::to_string(i), "blicket", i < 5 ? "direct" : "indirect", "Yes"};
        PredictionRecord pf{g.id, g.task, g.subset, "", "Yes", false, {}};
        PredictionRecord pa{g.id, g.task, g.subset, "", i % 2 == 0 ? "Yes" : "No", false, {}};
        golds.push_back(g);
        full.push_back(pf);
        ablated.push_back(pa);
    }

    AblationReport rep = run_ablation(full, ablated, golds);
    CHECK(rep.full.accuracy == doctest::Approx(1.0));
    CHECK(rep.ablated.accuracy == doctest::Approx(0.5));
    CHECK(rep.delta_accuracy == doctest::Approx(0.5));
    CHECK(rep.delta_subset_accuracy.at("direct") == doctest::Approx(1.0 - 3.0 / 5.0));

    AblationReport same = run_ablation(full, full, golds);
    CHECK(same.delta_accuracy == 0.0);
    CHECK(same.delta_top1 == 0.0);
    for (const auto& [k, v] : same.delta_subset_accuracy) {
        (void)k;
        CHECK(v == 0.0);
    }

    const std::string table = format_ablation(rep);
    CHECK(table.find("accuracy") != std::string::npos);
    CHECK(table.find("delta") != std::string::npos);
    CHECK(table.find("answer_only") != std::string::npos);

    std::vector<PredictionRecord> other = ablated;
    other.pop_back();
    CHECK_THROWS_WITH_AS(run_ablation(full, other, golds),
                         doctest::Contains("different episodes"), Error);

    // Deltas recomputable from dumped artifacts.
    const std::string pf = temp_path("full.jsonl"), pa = temp_path("ablated.jsonl");
    write_prediction_dump(pf, full, golds);
    write_prediction_dump(pa, ablated, golds);
    auto [rf, gf] = read_prediction_dump(pf);
    auto [ra, ga] = read_prediction_dump(pa);
    (void)ga;
    AblationReport rep2 = run_ablation(rf, ra, gf);
    CHECK(rep2.delta_accuracy == rep.delta_accuracy);
    CHECK(rep2.full.accuracy == rep.full.accuracy);
    std::remove(pf.c_str());
    std::remove(pa.c_str());
}

TEST_CASE("overfit one tracking example end to end through evaluate_example") {
    Rng rng(314);
    TrackingConfig tcfg;
    TrackingEpisode ep = sample_episode(rng, tcfg);
    TrainExample ex = example_from_tracking(ep, "trk0");
    std::vector<TrainExample> examples = {ex};
    Vocabulary vocab = build_train_vocabulary(examples);

    ModelConfig mc;
    mc.m = 2;
    mc.q = 32;
    mc.heads = 2;
    mc.vocab = vocab.size();
    mc.max_seq = 256;
    mc.vision.channels = {4, 4, 8, 8};
    mc.vision.qprime = 8;
    Rng mrng(315);
    LrrModel<float> model(mc, mrng);

    TrainConfig cfg;
    cfg.rationale_mode = RationaleMode::answer_only;
    cfg.jitter_p = 0;  // inputs are just the answer sentence; keep them clean
    cfg.lr = 2e-3;
    cfg.steps = 150;
    cfg.seed = 4;
    TrainResult res = train_loop(model, examples, vocab, cfg, nullptr);
    CHECK(res.final_loss < 0.05);

    PredictionRecord rec = evaluate_example(model, vocab, ex, 16);
    CHECK(rec.answer == ex.answer);
    CHECK_FALSE(rec.truncated);
    const std::string gold_target = "The answer is, " + ex.answer + ".";
    CHECK(rec.generated == decode(vocab, encode(vocab, gold_target)));
    REQUIRE(static_cast<int>(rec.cell_probs.size()) == kGridCells);
    const int gold_cell = std::stoi(ex.answer);
    for (int c = 0; c < kGridCells; ++c) {
        CHECK(rec.cell_probs[static_cast<size_t>(c)] <=
              rec.cell_probs[static_cast<size_t>(gold_cell)]);
    }

    Metrics m = compute_metrics({rec}, {gold_of(ex)});
    CHECK(m.accuracy == doctest::Approx(1.0));
    CHECK(m.top1 == doctest::Approx(1.0));
    CHECK(m.l1_grid == doctest::Approx(0.0));
}
