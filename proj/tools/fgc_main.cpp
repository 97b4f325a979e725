// fgc: fine-grained controllable text-to-audio toolbox.
// Subcommands: extract | simulate | train | generate | edit | eval

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fgc/conditions.hpp"
#include "fgc/data.hpp"
#include "fgc/dsp.hpp"
#include "fgc/editspec.hpp"
#include "fgc/eval.hpp"
#include "fgc/fgc1.hpp"
#include "fgc/model.hpp"
#include "fgc/pipeline.hpp"
#include "fgc/train.hpp"
#include "fgc/vocab.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fgc;

namespace {

constexpr int kExitUsage = 2;   // bad inputs, unreadable files, malformed specs
constexpr int kExitModel = 3;   // incompatible checkpoint/config

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_sidecar(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write sidecar: " + path);
    f << j.dump(2) << '\n';
}

// --condition kind=path, repeatable.
struct CondFlag {
    cond::CondKind kind;
    std::string path;
};

std::vector<CondFlag> parse_cond_flags(const std::vector<std::string>& raw) {
    std::vector<CondFlag> out;
    for (const auto& s : raw) {
        const size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--condition expects kind=path, got \"" + s + "\"");
        out.push_back({cond::cond_kind_from_name(s.substr(0, eq)), s.substr(eq + 1)});
    }
    return out;
}

model::CondInput load_cond_input(const model::ModelBundle& bundle, const CondFlag& flag) {
    switch (flag.kind) {
        case cond::CondKind::loudness: {
            auto rec = fgc1::read_file(flag.path);
            cond::LoudnessCurve curve;
            curve.db = rec.data;
            return train::loudness_cond_input(bundle, curve);
        }
        case cond::CondKind::pitch: {
            auto rec = fgc1::read_file(flag.path);
            cond::PitchCode code;
            code.codebook_dim = bundle.config.latent_width;
            code.bins.assign(static_cast<size_t>(rec.rows()),
                             std::vector<int>(static_cast<size_t>(rec.cols())));
            for (int64_t r = 0; r < rec.rows(); ++r)
                for (int64_t c = 0; c < rec.cols(); ++c)
                    code.bins[static_cast<size_t>(r)][static_cast<size_t>(c)] =
                        static_cast<int>(rec.data[static_cast<size_t>(r * rec.cols() + c)]);
            return train::pitch_cond_input(code);
        }
        case cond::CondKind::event:
            return train::event_cond_input(cond::read_roll(flag.path));
        case cond::CondKind::edit:
            throw std::invalid_argument("edit conditions are built by the edit subcommand");
    }
    throw std::invalid_argument("unhandled condition kind");
}

// ---------------------------------------------------------------- extract ---

struct ExtractArgs {
    std::string audio;
    std::string kind;
    std::string out_dir = ".";
    int frame_length = 4096;
    int hop = 1025;
    int savgol_window = 11;
    int savgol_order = 3;
    double eps = 1e-5;
    double fmin = 60.0, fmax = 1000.0;
    int n_bins = 256;
    int n_scales = 32;
    double lo = 0.0, hi = 0.0;  // 0/0 = derive from the clip
    int n_labels = 12;
};

int cmd_extract(const ExtractArgs& a) {
    dsp::AudioClip clip = dsp::read_wav(a.audio);
    dsp::FrameSpec spec{a.frame_length, a.hop};
    const std::string base = a.out_dir + "/" + stem_of(a.audio);
    fs::create_directories(a.out_dir);

    nlohmann::json side;
    side["input"] = a.audio;
    side["kind"] = a.kind;
    side["frame_length"] = a.frame_length;
    side["hop"] = a.hop;
    side["sample_rate"] = clip.sample_rate;

    if (a.kind == "loudness") {
        auto curve = cond::extract_loudness(clip, spec, a.savgol_window, a.savgol_order, a.eps);
        fgc1::write_file(base + "_loudness.fgc1", fgc1::from_vector(curve.db));
        Mat m(static_cast<int64_t>(curve.db.size()), 1);
        m.v = curve.db;
        fgc1::write_csv(base + "_loudness.csv", m);
        side["frames"] = curve.db.size();
        side["frame_rate"] = curve.frame_rate;
        side["savgol_window"] = a.savgol_window;
        side["savgol_order"] = a.savgol_order;
        side["eps"] = a.eps;
        write_sidecar(base + "_loudness.json", side);
        std::cout << "wrote " << base << "_loudness.fgc1 (" << curve.db.size() << " frames)\n";
    } else if (a.kind == "pitch") {
        auto scales = cond::default_cwt_scales(a.n_scales);
        cond::QuantizerStats stats{a.lo, a.hi};
        if (a.lo == 0.0 && a.hi == 0.0)
            stats = cond::quantizer_stats_from({cond::pitch_cwt_matrix(clip, spec, scales, a.fmin, a.fmax)});
        auto code = cond::extract_pitch(clip, spec, stats, scales, a.n_bins, a.fmin, a.fmax);
        Mat m(static_cast<int64_t>(code.bins.size()),
              static_cast<int64_t>(code.bins.empty() ? 0 : code.bins[0].size()));
        for (int64_t r = 0; r < m.rows; ++r)
            for (int64_t c = 0; c < m.cols; ++c)
                m.at(r, c) = code.bins[static_cast<size_t>(r)][static_cast<size_t>(c)];
        fgc1::write_file(base + "_pitch.fgc1", fgc1::from_mat(m));
        fgc1::write_csv(base + "_pitch.csv", m);
        side["frames"] = m.rows;
        side["scales"] = a.n_scales;
        side["n_bins"] = a.n_bins;
        side["quantizer_lo"] = stats.lo;
        side["quantizer_hi"] = stats.hi;
        side["fmin"] = a.fmin;
        side["fmax"] = a.fmax;
        write_sidecar(base + "_pitch.json", side);
        std::cout << "wrote " << base << "_pitch.fgc1 (" << m.rows << "x" << m.cols << " bins)\n";
    } else if (a.kind == "events") {
        auto vocab = Vocabulary::default_toy(a.n_labels);
        auto det = eval::toy_sed(clip, vocab);
        cond::EventRoll roll;
        roll.duration = clip.duration();
        for (const auto& l : det.labels)
            if (!l.intervals.empty()) roll.events.push_back({l.label, l.intervals});
        cond::write_roll(base + "_events.json", roll);
        side["labels"] = vocab.labels();
        write_sidecar(base + "_events_params.json", side);
        std::cout << "wrote " << base << "_events.json (" << roll.events.size() << " labels)\n";
    } else {
        throw std::invalid_argument("unknown --kind \"" + a.kind +
                                    "\" (want loudness, pitch, or events)");
    }
    return 0;
}

// --------------------------------------------------------------- simulate ---

struct SimArgs {
    std::string out_dir;
    int n_clips = 512;
    double duration = 2.0;
    int n_labels = 12;
    int min_events = 1, max_events = 3;
    uint64_t seed = 0;
    int edit_pairs = 0;
};

int cmd_simulate(const SimArgs& a) {
    data::ToyCorpusSpec spec;
    spec.n_clips = a.n_clips;
    spec.duration = a.duration;
    spec.n_labels = a.n_labels;
    spec.min_events = a.min_events;
    spec.max_events = a.max_events;
    spec.seed = a.seed;
    data::write_toy_corpus(a.out_dir, spec, a.edit_pairs);
    std::cout << "wrote corpus with " << a.n_clips << " clips to " << a.out_dir << '\n';
    return 0;
}

// ------------------------------------------------------------------ train ---

struct TrainArgs {
    std::string corpus;
    std::string stage;
    std::string condition = "loudness";
    std::string action = "insert";
    std::string init_ckpt;
    std::string out_ckpt;
    std::string metrics;
    int depth = 0;  // 0 = all blocks
    int lora_rank = 64;
    int steps = 5000;
    int batch_size = 4;
    double lr = 1e-4;
    double cfg_drop = 0.10;
    uint64_t seed = 0;
    int checkpoint_every = 0;
    int editor_pairs = 256;
    // backbone architecture (ignored with --init)
    int n_mmdit = 2, n_dit = 2, latent_width = 16, hidden = 64, heads = 4;
};

int cmd_train(const TrainArgs& a) {
    auto manifest = data::read_manifest(a.corpus);

    model::ModelBundle bundle = [&] {
        if (!a.init_ckpt.empty()) return model::ModelBundle::load(a.init_ckpt);
        model::BackboneConfig cfg;
        cfg.n_mmdit = a.n_mmdit;
        cfg.n_dit = a.n_dit;
        cfg.latent_width = a.latent_width;
        cfg.hidden = a.hidden;
        cfg.heads = a.heads;
        cfg.duration = manifest.spec.duration;
        return model::ModelBundle::init(cfg, manifest.spec.vocabulary(), a.seed);
    }();
    if (bundle.config.duration != manifest.spec.duration)
        throw config_error("checkpoint duration " + std::to_string(bundle.config.duration) +
                           " does not match corpus duration " +
                           std::to_string(manifest.spec.duration));

    const int depth = a.depth > 0 ? a.depth : bundle.config.n_blocks();
    std::vector<train::Sample> samples;
    if (a.stage == "backbone") {
        if (bundle.branch_type != model::BranchType::none)
            throw config_error("--stage backbone cannot start from a branch checkpoint");
        samples = train::build_backbone_samples(bundle, a.corpus, manifest.train_ids);
    } else if (a.stage == "adapter" || a.stage == "controlnet") {
        if (a.init_ckpt.empty())
            throw config_error("--stage " + a.stage + " needs --init with a trained backbone");
        const auto kind = cond::cond_kind_from_name(a.condition);
        if (kind == cond::CondKind::pitch)
            bundle.qstats = train::compute_corpus_pitch_stats(a.corpus, manifest.train_ids);
        if (a.stage == "adapter")
            bundle.attach_adapter(depth, kind, a.seed);
        else
            bundle.attach_controlnet(depth, kind, a.seed);
        samples = train::build_condition_samples(bundle, a.corpus, manifest.train_ids, kind);
    } else if (a.stage == "editor") {
        if (a.init_ckpt.empty()) throw config_error("--stage editor needs --init");
        bundle.attach_editor(depth, a.lora_rank, a.seed);
        EditSpec::Action action = a.action == "remove" ? EditSpec::Action::remove
                                                       : EditSpec::Action::insert;
        if (a.action != "insert" && a.action != "remove")
            throw std::invalid_argument("--action must be insert or remove");
        samples = train::build_editor_samples(bundle, a.corpus, manifest.train_ids, action,
                                              a.editor_pairs, a.seed)
                      .samples;
    } else {
        throw std::invalid_argument("unknown --stage \"" + a.stage + "\"");
    }

    train::TrainConfig cfg;
    cfg.steps = a.steps;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = a.lr;
    cfg.cfg_drop_prob = a.cfg_drop;
    cfg.seed = a.seed;
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.checkpoint_path = a.out_ckpt;
    cfg.metrics_path = a.metrics.empty() ? a.out_ckpt + ".metrics.jsonl" : a.metrics;

    std::cout << "training " << a.stage << " for " << a.steps << " steps on "
              << samples.size() << " samples\n";
    auto stats = train::train_model(bundle, samples, cfg);
    bundle.save(a.out_ckpt);
    std::cout << "loss " << stats.first_loss << " -> " << stats.last_loss << "; wrote "
              << a.out_ckpt << '\n';
    return 0;
}

// --------------------------------------------------------------- generate ---

struct GenerateArgs {
    std::string checkpoint;
    std::string text;
    std::vector<std::string> conditions;
    std::vector<std::string> compose;
    int steps = 25;
    double cfg_scale = 4.5;
    uint64_t seed = 0;
    std::string out_dir = ".";
};

int cmd_generate(const GenerateArgs& a) {
    model::ModelBundle bundle = model::ModelBundle::load(a.checkpoint);
    std::vector<model::ModelBundle> extra;
    for (const auto& p : a.compose) extra.push_back(model::ModelBundle::load(p));

    std::vector<model::CondInput> conds;
    for (const auto& flag : parse_cond_flags(a.conditions))
        conds.push_back(load_cond_input(bundle, flag));

    train::SampleConfig sc;
    sc.steps = a.steps;
    sc.cfg_scale = a.cfg_scale;
    sc.seed = a.seed;

    Mat latent;
    if (extra.empty()) {
        latent = train::sample(bundle, a.text, conds, sc);
    } else {
        std::vector<const model::ModelBundle*> bundles = {&bundle};
        for (const auto& b : extra) bundles.push_back(&b);
        latent = train::sample_composed(bundles, a.text, conds, sc);
    }

    fs::create_directories(a.out_dir);
    fgc1::write_file(a.out_dir + "/gen_latent.fgc1", fgc1::from_mat(latent, fgc1::Dtype::f64));
    dsp::AudioClip wav = train::clip_from_latent(bundle, latent);
    dsp::write_wav(a.out_dir + "/gen.wav", wav);
    std::cout << "wrote " << a.out_dir << "/gen.wav and gen_latent.fgc1\n";
    return 0;
}

// ------------------------------------------------------------------- edit ---

struct EditArgs {
    std::string checkpoint;
    std::string input;
    std::string spec;
    int steps = 25;
    double cfg_scale = 4.5;
    uint64_t seed = 0;
    std::string out_dir = ".";
};

int cmd_edit(const EditArgs& a) {
    EditSpec spec = parse_edit_spec(a.spec);
    model::ModelBundle bundle = model::ModelBundle::load(a.checkpoint);
    if (bundle.branch_type != model::BranchType::editor)
        throw config_error("checkpoint has no editor branch: " + a.checkpoint);
    if (bundle.vocab.index_of(spec.label) < 0)
        throw std::invalid_argument("label not in the model vocabulary: " + spec.label);

    dsp::AudioClip input = dsp::read_wav(a.input);
    if (spec.end > input.duration() + 1e-9)
        throw std::invalid_argument("edit span ends after the clip (" +
                                    std::to_string(input.duration()) + " s)");

    model::CondInput ci = train::edit_cond_input(bundle, input, spec);
    train::SampleConfig sc;
    sc.steps = a.steps;
    sc.cfg_scale = a.cfg_scale;
    sc.seed = a.seed;
    Mat latent = train::sample(bundle, "", {ci}, sc);
    dsp::AudioClip edited = train::clip_from_latent(bundle, latent);

    fs::create_directories(a.out_dir);
    dsp::write_wav(a.out_dir + "/edited.wav", edited);
    const double before = eval::edit_score(input, spec.label, spec.start, spec.end, bundle.vocab);
    const double after = eval::edit_score(edited, spec.label, spec.start, spec.end, bundle.vocab);
    nlohmann::json report;
    report["instruction"] = format_edit_spec(spec);
    report["edit_score_before"] = before;
    report["edit_score_after"] = after;
    write_sidecar(a.out_dir + "/edit_report.json", report);
    std::cout << "edit_score " << before << " -> " << after << "; wrote " << a.out_dir
              << "/edited.wav\n";
    return 0;
}

// ------------------------------------------------------------------- eval ---

struct EvalArgs {
    std::string wav;
    std::string roll;
    std::string loudness;
    std::string f0_wav;  // reference audio for the pitch target
    std::string label;
    double span_start = 0.0, span_end = 0.0;
    int n_labels = 12;
    std::string out_json;
    std::string out_csv;
};

int cmd_eval(const EvalArgs& a) {
    dsp::AudioClip clip = dsp::read_wav(a.wav);
    auto vocab = Vocabulary::default_toy(a.n_labels);
    nlohmann::json report;
    report["wav"] = a.wav;
    bool any_nan = false;
    std::vector<std::pair<std::string, double>> csv_rows;

    if (!a.roll.empty()) {
        auto ref = cond::read_roll(a.roll);
        auto det = eval::toy_sed(clip, vocab);
        auto f1 = eval::evaluate_events(ref, det);
        report["event_f1"] = f1.event.f1;
        report["event_precision"] = f1.event.precision;
        report["event_recall"] = f1.event.recall;
        report["segment_f1"] = f1.segment.f1;
        report["segment_precision"] = f1.segment.precision;
        report["segment_recall"] = f1.segment.recall;
        for (const auto& [label, prf] : f1.per_label_event)
            report["per_label_event_f1"][label] = prf.f1;
        csv_rows.push_back({"event_f1", f1.event.f1});
        csv_rows.push_back({"segment_f1", f1.segment.f1});
        any_nan |= !std::isfinite(f1.event.f1) || !std::isfinite(f1.segment.f1);
    }
    if (!a.loudness.empty()) {
        auto rec = fgc1::read_file(a.loudness);
        cond::LoudnessCurve target;
        target.db = rec.data;
        const double mae = eval::loudness_mae(clip, target);
        report["loudness_mae_db"] = mae;
        csv_rows.push_back({"loudness_mae_db", mae});
        any_nan |= !std::isfinite(mae);
    }
    if (!a.f0_wav.empty()) {
        dsp::AudioClip ref = dsp::read_wav(a.f0_wav);
        const dsp::FrameSpec spec{};
        auto target = dsp::estimate_f0(cond::center_pad(ref, spec), spec);
        auto mae = eval::pitch_mae(clip, target);
        if (mae) {
            report["pitch_mae_hz"] = *mae;
            csv_rows.push_back({"pitch_mae_hz", *mae});
            any_nan |= !std::isfinite(*mae);
        } else {
            report["pitch_mae_hz"] = nullptr;  // undefined: no mutually voiced frames
        }
    }
    if (!a.label.empty()) {
        const double score = eval::edit_score(clip, a.label, a.span_start, a.span_end, vocab);
        report["edit_score"] = score;
        csv_rows.push_back({"edit_score", score});
        any_nan |= !std::isfinite(score);
    }

    if (!a.out_json.empty()) write_sidecar(a.out_json, report);
    if (!a.out_csv.empty()) {
        std::ofstream f(a.out_csv);
        f << "metric,value\n";
        for (const auto& [k, v] : csv_rows) f << k << ',' << v << '\n';
    }
    std::cout << report.dump(2) << '\n';
    return any_nan ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fine-grained controllable text-to-audio toolbox"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a TOML/INI config file");
    app.allow_config_extras(false);  // unknown keys are rejected

    ExtractArgs ex;
    auto* extract = app.add_subcommand("extract", "extract condition features from a WAV file");
    extract->add_option("audio", ex.audio, "input WAV path")->required();
    extract->add_option("--kind", ex.kind, "feature kind: loudness | pitch | events")->required();
    extract->add_option("--out", ex.out_dir, "output directory")->capture_default_str();
    extract->add_option("--frame-length", ex.frame_length, "analysis frame length in samples")
        ->capture_default_str();
    extract->add_option("--hop", ex.hop, "hop size in samples")->capture_default_str();
    extract->add_option("--savgol-window", ex.savgol_window, "SavGol window length")
        ->capture_default_str();
    extract->add_option("--savgol-order", ex.savgol_order, "SavGol polynomial order")
        ->capture_default_str();
    extract->add_option("--eps", ex.eps, "loudness epsilon")->capture_default_str();
    extract->add_option("--fmin", ex.fmin, "lowest f0 (Hz)")->capture_default_str();
    extract->add_option("--fmax", ex.fmax, "highest f0 (Hz)")->capture_default_str();
    extract->add_option("--n-bins", ex.n_bins, "pitch quantizer bins")->capture_default_str();
    extract->add_option("--scales", ex.n_scales, "CWT scale count (1..N)")->capture_default_str();
    extract->add_option("--lo", ex.lo, "quantizer lower bound (with --hi; default from clip)");
    extract->add_option("--hi", ex.hi, "quantizer upper bound");
    extract->add_option("--n-labels", ex.n_labels, "vocabulary size for --kind events")
        ->capture_default_str();

    SimArgs sim;
    auto* simulate = app.add_subcommand("simulate", "write a synthetic training corpus");
    simulate->add_option("--out", sim.out_dir, "corpus directory")->required();
    simulate->add_option("--n-clips", sim.n_clips, "number of clips")->capture_default_str();
    simulate->add_option("--duration", sim.duration, "clip duration (s)")->capture_default_str();
    simulate->add_option("--n-labels", sim.n_labels, "vocabulary size")->capture_default_str();
    simulate->add_option("--min-events", sim.min_events, "min events per clip")
        ->capture_default_str();
    simulate->add_option("--max-events", sim.max_events, "max events per clip")
        ->capture_default_str();
    simulate->add_option("--seed", sim.seed, "corpus RNG seed")->capture_default_str();
    simulate->add_option("--edit-pairs", sim.edit_pairs, "sample edit pairs to write")
        ->capture_default_str();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train the backbone or a control branch");
    train_cmd->add_option("--corpus", tr.corpus, "corpus directory")->required();
    train_cmd->add_option("--stage", tr.stage, "backbone | controlnet | adapter | editor")
        ->required();
    train_cmd->add_option("--condition", tr.condition, "condition kind for branch stages")
        ->capture_default_str();
    train_cmd->add_option("--action", tr.action, "editor action: insert | remove")
        ->capture_default_str();
    train_cmd->add_option("--init", tr.init_ckpt, "checkpoint to start from");
    train_cmd->add_option("--out", tr.out_ckpt, "output checkpoint path")->required();
    train_cmd->add_option("--metrics", tr.metrics, "metrics JSONL path");
    train_cmd->add_option("--depth", tr.depth, "branch depth l (0 = all layers)")
        ->capture_default_str();
    train_cmd->add_option("--lora-rank", tr.lora_rank, "editor LoRA rank (0 disables)")
        ->capture_default_str();
    train_cmd->add_option("--steps", tr.steps, "optimization steps")->capture_default_str();
    train_cmd->add_option("--batch-size", tr.batch_size, "batch size")->capture_default_str();
    train_cmd->add_option("--lr", tr.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--cfg-drop", tr.cfg_drop, "joint condition drop probability")
        ->capture_default_str();
    train_cmd->add_option("--seed", tr.seed, "training seed")->capture_default_str();
    train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "checkpoint every N steps")
        ->capture_default_str();
    train_cmd->add_option("--editor-pairs", tr.editor_pairs, "simulated pairs for editor stages")
        ->capture_default_str();
    train_cmd->add_option("--n-mmdit", tr.n_mmdit, "MMDiT blocks (fresh backbone)")
        ->capture_default_str();
    train_cmd->add_option("--n-dit", tr.n_dit, "DiT blocks (fresh backbone)")
        ->capture_default_str();
    train_cmd->add_option("--latent-width", tr.latent_width, "latent width (fresh backbone)")
        ->capture_default_str();
    train_cmd->add_option("--hidden", tr.hidden, "hidden width (fresh backbone)")
        ->capture_default_str();
    train_cmd->add_option("--heads", tr.heads, "attention heads (fresh backbone)")
        ->capture_default_str();

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "sample audio from a checkpoint");
    generate->add_option("--checkpoint", gen.checkpoint, "model checkpoint")->required();
    generate->add_option("--text", gen.text, "caption (vocabulary words)")->capture_default_str();
    generate->add_option("--condition", gen.conditions,
                         "condition attachment kind=path (repeatable)");
    generate->add_option("--compose", gen.compose,
                         "additional control checkpoints composed by residual summing");
    generate->add_option("--steps", gen.steps, "flow steps")->capture_default_str();
    generate->add_option("--cfg-scale", gen.cfg_scale, "classifier-free guidance scale")
        ->capture_default_str();
    generate->add_option("--seed", gen.seed, "sampling seed")->capture_default_str();
    generate->add_option("--out", gen.out_dir, "output directory")->capture_default_str();

    EditArgs ed;
    auto* edit = app.add_subcommand("edit", "apply a temporally localized edit to a WAV file");
    edit->add_option("--checkpoint", ed.checkpoint, "editor checkpoint")->required();
    edit->add_option("--input", ed.input, "input WAV")->required();
    edit->add_option("--spec", ed.spec, "instruction \"action: label: start: end\"")->required();
    edit->add_option("--steps", ed.steps, "flow steps")->capture_default_str();
    edit->add_option("--cfg-scale", ed.cfg_scale, "guidance scale")->capture_default_str();
    edit->add_option("--seed", ed.seed, "sampling seed")->capture_default_str();
    edit->add_option("--out", ed.out_dir, "output directory")->capture_default_str();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "objective metrics for a generated WAV");
    eval_cmd->add_option("--wav", ev.wav, "generated WAV")->required();
    eval_cmd->add_option("--roll", ev.roll, "reference event roll JSON (event/segment F1)");
    eval_cmd->add_option("--loudness", ev.loudness, "reference loudness curve .fgc1 (MAE)");
    eval_cmd->add_option("--f0-ref", ev.f0_wav, "reference WAV for pitch MAE");
    eval_cmd->add_option("--label", ev.label, "label for the edit span score");
    eval_cmd->add_option("--span-start", ev.span_start, "edit span start (s)");
    eval_cmd->add_option("--span-end", ev.span_end, "edit span end (s)");
    eval_cmd->add_option("--n-labels", ev.n_labels, "detector vocabulary size")
        ->capture_default_str();
    eval_cmd->add_option("--out-json", ev.out_json, "write the JSON report here");
    eval_cmd->add_option("--out-csv", ev.out_csv, "write the CSV summary here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*extract) return cmd_extract(ex);
        if (*simulate) return cmd_simulate(sim);
        if (*train_cmd) return cmd_train(tr);
        if (*generate) return cmd_generate(gen);
        if (*edit) return cmd_edit(ed);
        if (*eval_cmd) return cmd_eval(ev);
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitModel;
    } catch (const shape_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
