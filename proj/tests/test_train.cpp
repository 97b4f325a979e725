#include "fgc/train.hpp"

#include <cmath>
#include <fstream>

#include "doctest.h"
#include "fgc/model.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fgc;
using nn::Tensor;

namespace {

model::BackboneConfig tiny_config() {
    model::BackboneConfig cfg;
    cfg.n_mmdit = 1;
    cfg.n_dit = 1;
    cfg.latent_width = 8;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.duration = 0.25;
    return cfg;
}

Vocabulary tiny_vocab() { return Vocabulary::default_toy(4); }

std::vector<train::Sample> toy_dataset(const model::BackboneConfig& cfg, int n, uint64_t seed,
                                       bool with_loud_cond = false) {
    Rng rng(seed);
    const auto labels = tiny_vocab().labels();
    std::vector<train::Sample> data;
    for (int i = 0; i < n; ++i) {
        train::Sample s;
        s.x0 = Mat(cfg.latent_frames(), cfg.latent_width);
        for (auto& v : s.x0.v) v = rng.gaussian();
        s.caption = labels[static_cast<size_t>(i) % labels.size()];
        if (with_loud_cond) {
            model::CondInput ci;
            ci.kind = cond::CondKind::loudness;
            ci.loud = Mat(cfg.latent_frames(), cfg.latent_width);
            for (auto& v : ci.loud.v) v = rng.uniform(-1.0, 1.0);
            s.cond = ci;
        }
        data.push_back(std::move(s));
    }
    return data;
}

}  // namespace

TEST_CASE("flow_loss exact cases and brute-force oracle") {
    Rng rng(1);
    Tensor x0 = Tensor::randn({5, 3}, rng);
    Tensor eps = Tensor::randn({5, 3}, rng);

    // model_out equal to the target velocity: zero loss.
    Tensor perfect = nn::sub(eps, x0);
    CHECK(train::flow_loss(perfect, x0, eps, 0.3).item() == doctest::Approx(0.0));

    // x0 == eps: target is 0, so a zero output has zero loss.
    Tensor zeros = Tensor::zeros({5, 3});
    CHECK(train::flow_loss(zeros, eps, eps, 0.7).item() == doctest::Approx(0.0));

    // Random case against an independent scalar loop.
    Tensor out = Tensor::randn({5, 3}, rng);
    const double loss = train::flow_loss(out, x0, eps, 0.5).item();
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double target = eps.data()[static_cast<size_t>(i)] - x0.data()[static_cast<size_t>(i)];
        const double d = out.data()[static_cast<size_t>(i)] - target;
        acc += d * d;
    }
    CHECK(loss == doctest::Approx(acc / static_cast<double>(out.numel())).epsilon(1e-12));

    Tensor wrong = Tensor::zeros({5, 4});
    CHECK_THROWS_AS(train::flow_loss(wrong, x0, eps, 0.5), shape_error);
}

TEST_CASE("edit_loss normalization and weighted oracle") {
    Rng rng(2);
    Tensor out = Tensor::randn({6, 4}, rng);
    Tensor target = Tensor::randn({6, 4}, rng);
    const double flow = train::flow_loss(out, Tensor::zeros({6, 4}), target, 0.1).item();

    // All-zero and all-one masks reduce exactly to flow_loss after normalization.
    std::vector<int> none(6, 0), all(6, 1);
    CHECK(train::edit_loss(out, target, none).item() == doctest::Approx(flow).epsilon(1e-15));
    CHECK(train::edit_loss(out, target, all).item() == doctest::Approx(flow).epsilon(1e-15));

    // Half-masked case against an independent weighted loop.
    std::vector<int> half = {1, 1, 1, 0, 0, 0};
    const double got = train::edit_loss(out, target, half).item();
    double num = 0.0, den = 0.0;
    for (int64_t t = 0; t < 6; ++t) {
        const double w = half[static_cast<size_t>(t)] ? 10.0 : 1.0;
        den += w;
        for (int64_t d = 0; d < 4; ++d) {
            const double e = out.data()[static_cast<size_t>(t * 4 + d)] -
                             target.data()[static_cast<size_t>(t * 4 + d)];
            num += w * e * e;
        }
    }
    CHECK(std::fabs(got - num / (4.0 * den)) < 1e-12);

    CHECK_THROWS_AS(train::edit_loss(out, target, {1, 0}), std::invalid_argument);
    Tensor empty = Tensor::zeros({0, 4});
    CHECK_THROWS_AS(train::edit_loss(empty, empty, {}), std::invalid_argument);
}

TEST_CASE("training reduces the loss on a 4-sample toy set") {
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 5);
    auto data = toy_dataset(bundle.config, 4, 6);
    train::TrainConfig cfg;
    cfg.steps = 100;
    cfg.batch_size = 2;
    cfg.learning_rate = 2e-3;
    cfg.seed = 7;
    auto stats = train::train_model(bundle, data, cfg);
    CHECK(stats.steps_run == 100);
    INFO("first ", stats.first_loss, " last ", stats.last_loss);
    CHECK(stats.last_loss < stats.first_loss);
}

TEST_CASE("cfg_drop_prob = 0 never uses the null embedding") {
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 8);
    auto data = toy_dataset(bundle.config, 4, 9);
    train::TrainConfig cfg;
    cfg.steps = 25;
    cfg.batch_size = 2;
    cfg.cfg_drop_prob = 0.0;
    auto stats = train::train_model(bundle, data, cfg);
    CHECK(stats.null_drop_count == 0);

    train::TrainConfig cfg2 = cfg;
    cfg2.steps = 60;
    cfg2.cfg_drop_prob = 0.5;
    auto bundle2 = model::ModelBundle::init(tiny_config(), tiny_vocab(), 8);
    auto stats2 = train::train_model(bundle2, data, cfg2);
    CHECK(stats2.null_drop_count > 0);
}

TEST_CASE("branch training leaves the backbone bit-identical") {
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 10);
    bundle.attach_adapter(2, cond::CondKind::loudness, 11);
    std::vector<std::vector<double>> before;
    for (const auto& p : bundle.backbone_params())
        before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());

    auto data = toy_dataset(bundle.config, 4, 12, /*with_loud_cond=*/true);
    train::TrainConfig cfg;
    cfg.steps = 50;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    auto stats = train::train_model(bundle, data, cfg);
    CHECK(stats.steps_run == 50);

    auto after = bundle.backbone_params();
    REQUIRE(after.size() == before.size());
    for (size_t i = 0; i < after.size(); ++i) {
        std::vector<double> now(after[i].tensor.data().begin(), after[i].tensor.data().end());
        CHECK(now == before[i]);
    }
}

TEST_CASE("training is deterministic given the seed") {
    auto data = toy_dataset(tiny_config(), 4, 13);
    train::TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 2;
    cfg.seed = 14;

    auto b1 = model::ModelBundle::init(tiny_config(), tiny_vocab(), 15);
    auto s1 = train::train_model(b1, data, cfg);
    auto b2 = model::ModelBundle::init(tiny_config(), tiny_vocab(), 15);
    auto s2 = train::train_model(b2, data, cfg);
    CHECK(s1.losses == s2.losses);

    train::SampleConfig sc;
    sc.steps = 5;
    sc.seed = 16;
    Mat g1 = train::sample(b1, "dog", {}, sc);
    Mat g2 = train::sample(b2, "dog", {}, sc);
    CHECK(g1.v == g2.v);
}

TEST_CASE("train aborts with diagnostics on non-finite loss") {
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 17);
    for (auto& p : bundle.backbone_params())
        if (p.name == "backbone.input_proj.w")
            p.tensor.mutable_data()[0] = std::numeric_limits<double>::infinity();
    auto data = toy_dataset(bundle.config, 2, 18);
    train::TrainConfig cfg;
    cfg.steps = 3;
    CHECK_THROWS_AS(train::train_model(bundle, data, cfg), numeric_error);
}

TEST_CASE("periodic checkpointing writes a loadable bundle") {
    testutil::TempDir tmp("ckpt_every");
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 31);
    auto data = toy_dataset(bundle.config, 2, 32);
    train::TrainConfig cfg;
    cfg.steps = 4;
    cfg.batch_size = 1;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_path = tmp.file("periodic.zip");
    train::train_model(bundle, data, cfg);
    auto loaded = model::ModelBundle::load(cfg.checkpoint_path);
    // The periodic checkpoint is from step 4 (the last multiple of 2).
    auto now = bundle.backbone_params();
    auto then = loaded.backbone_params();
    REQUIRE(now.size() == then.size());
    for (size_t i = 0; i < now.size(); ++i) {
        std::vector<double> a(now[i].tensor.data().begin(), now[i].tensor.data().end());
        std::vector<double> b(then[i].tensor.data().begin(), then[i].tensor.data().end());
        CHECK(a == b);
    }
}

TEST_CASE("metrics log is JSON lines with the required keys") {
    testutil::TempDir tmp("metrics");
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 19);
    auto data = toy_dataset(bundle.config, 2, 20);
    train::TrainConfig cfg;
    cfg.steps = 5;
    cfg.batch_size = 1;
    cfg.metrics_path = tmp.file("metrics.jsonl");
    train::train_model(bundle, data, cfg);

    std::ifstream f(cfg.metrics_path);
    REQUIRE(f.good());
    std::string line;
    int lines = 0;
    while (std::getline(f, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("grad_norm"));
        CHECK(j.contains("lr"));
        ++lines;
    }
    CHECK(lines == 5);
}

TEST_CASE("sampler solves a constant-velocity flow exactly for any step count") {
    const int64_t frames = 7, width = 5;
    Mat c(frames, width);
    Rng rng(21);
    for (auto& v : c.v) v = rng.gaussian();

    for (int steps : {1, 7, 25}) {
        train::SampleConfig sc;
        sc.steps = steps;
        sc.seed = 22;
        // The initial noise the sampler will draw, replicated here.
        Rng noise_rng(sc.seed);
        Mat eps(frames, width);
        for (auto& v : eps.v) v = noise_rng.gaussian();

        auto velocity = [&](const Mat&, double) {
            Mat v(frames, width);
            for (size_t i = 0; i < v.v.size(); ++i) v.v[i] = eps.v[i] - c.v[i];
            return v;
        };
        Mat out = train::sample_core(velocity, frames, width, sc);
        for (size_t i = 0; i < out.v.size(); ++i) CHECK(std::fabs(out.v[i] - c.v[i]) < 1e-9);
    }
}

TEST_CASE("CFG scale 1 equals the conditional-only path within 1e-12") {
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 23);
    bundle.attach_adapter(2, cond::CondKind::loudness, 24);
    // Live residuals so conditional and unconditional genuinely differ.
    Rng wrng(25);
    for (auto& z : bundle.adapter->zero_out)
        for (auto& v : z.w.mutable_data()) v = wrng.gaussian() * 0.1;

    model::CondInput ci;
    ci.kind = cond::CondKind::loudness;
    ci.loud = Mat(bundle.config.latent_frames(), bundle.config.latent_width);
    for (auto& v : ci.loud.v) v = wrng.uniform(-1.0, 1.0);

    train::SampleConfig sc;
    sc.steps = 6;
    sc.cfg_scale = 1.0;
    sc.seed = 26;
    Mat with_cfg = train::sample(bundle, "dog", {ci}, sc);

    auto cond_only = [&](const Mat& x, double t) {
        nn::NoGradGuard ng;
        return bundle.velocity(Tensor::from_mat(x), t, "dog", false, {ci}).to_mat();
    };
    Mat direct = train::sample_core(cond_only, bundle.config.latent_frames(),
                                    bundle.config.latent_width, sc);
    REQUIRE(with_cfg.v.size() == direct.v.size());
    for (size_t i = 0; i < with_cfg.v.size(); ++i)
        CHECK(std::fabs(with_cfg.v[i] - direct.v[i]) < 1e-12);
}

TEST_CASE("CFG scale 0 ignores conditions bit for bit") {
    auto bundle = model::ModelBundle::init(tiny_config(), tiny_vocab(), 27);
    bundle.attach_adapter(2, cond::CondKind::loudness, 28);
    Rng wrng(29);
    for (auto& z : bundle.adapter->zero_out)
        for (auto& v : z.w.mutable_data()) v = wrng.gaussian() * 0.1;

    model::CondInput a, b;
    a.kind = b.kind = cond::CondKind::loudness;
    a.loud = Mat(bundle.config.latent_frames(), bundle.config.latent_width, 0.5);
    b.loud = Mat(bundle.config.latent_frames(), bundle.config.latent_width, -0.9);

    train::SampleConfig sc;
    sc.steps = 4;
    sc.cfg_scale = 0.0;
    sc.seed = 30;
    Mat ga = train::sample(bundle, "cat", {a}, sc);
    Mat gb = train::sample(bundle, "cat", {b}, sc);
    CHECK(ga.v == gb.v);

    // And captions are ignored too (the unconditional pass uses the null token).
    Mat gc = train::sample(bundle, "dog", {a}, sc);
    CHECK(ga.v == gc.v);
}

TEST_CASE("AdamW validates config and clips gradients") {
    train::TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    train::TrainConfig cfg2;
    cfg2.cfg_drop_prob = 1.0;
    CHECK_THROWS_AS(cfg2.validate(), config_error);
    train::TrainConfig ok;
    CHECK_NOTHROW(ok.validate());

    // Global-norm clipping.
    Tensor p = Tensor::from_data({4}, {1, 1, 1, 1}, true);
    Tensor loss = nn::mul_scalar(nn::sum(nn::mul(p, p)), 50.0);
    loss.backward();
    std::vector<Tensor> params = {p};
    CHECK(nn::global_grad_norm(params) > 1.0);
    nn::clip_grad_norm(params, 1.0);
    CHECK(nn::global_grad_norm(params) == doctest::Approx(1.0));
}
