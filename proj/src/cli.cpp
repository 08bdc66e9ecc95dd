#include "zoosight/cli.hpp"

#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "zoosight/augmenter.hpp"
#include "zoosight/caption_scorer.hpp"
#include "zoosight/captioner.hpp"
#include "zoosight/config.hpp"
#include "zoosight/evaluator.hpp"
#include "zoosight/knowledge_base.hpp"
#include "zoosight/matcher.hpp"
#include "zoosight/pipeline.hpp"
#include "zoosight/prompts.hpp"
#include "zoosight/review_server.hpp"
#include "zoosight/review_service.hpp"
#include "zoosight/util.hpp"

namespace zoosight {

using nlohmann::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "INI config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "Seed for all randomness");
    cmd->add_option("--jobs", flags.jobs, "Bound on concurrent backend requests")->check(CLI::PositiveNumber);
    cmd->add_flag("--dry-run", flags.dry_run, "Print rendered prompts without calling any backend");
}

PipelineConfig resolve_config(const CommonFlags& flags) {
    PipelineConfig config = flags.config_path.empty() ? PipelineConfig{} : load_config(flags.config_path);
    if (flags.seed) config.seed = *flags.seed;
    if (flags.jobs) {
        config.jobs = *flags.jobs;
        config.chat.max_in_flight = static_cast<int>(*flags.jobs);
        config.vision.max_in_flight = static_cast<int>(*flags.jobs);
    }
    config.validate();
    return config;
}

void print_prompt(std::ostream& out, const std::string& stage, const std::string& id,
                  const std::optional<std::string>& system_message, const std::string& prompt) {
    out << json{{"stage", stage},
                {"id", id},
                {"system_message", system_message ? json(*system_message) : json(nullptr)},
                {"prompt", prompt}}
               .dump()
        << '\n';
}

void print_prompt(std::ostream& out, const std::string& stage, const std::string& id, const ChatRequest& request) {
    print_prompt(out, stage, id, request.system_message, request.prompt);
}

void write_or_print(const std::optional<std::string>& path, const std::string& contents, std::ostream& out) {
    if (path) {
        write_file(*path, contents);
    } else {
        out << contents;
    }
}

std::vector<double> parse_threshold_list(const std::string& text) {
    std::vector<double> values;
    for (const auto& part : split(text, ',')) {
        if (trim(part).empty()) continue;
        try {
            values.push_back(std::stod(trim(part)));
        } catch (const std::exception&) {
            fail(ErrorCode::Precondition, "threshold '" + trim(part) + "' is not a number");
        }
    }
    return values;
}

// ---- kb build ----------------------------------------------------------------

struct KbFlags {
    std::string species;
    std::string articles;
    std::optional<std::string> out;
    std::string rank = "species";
};

int cmd_kb_build(const CommonFlags& common, const KbFlags& flags, std::ostream& out, std::ostream& err) {
    const PipelineConfig config = resolve_config(common);
    const auto rows = parse_species_list(read_file(flags.species));
    FileArticleProvider provider(flags.articles);
    if (common.dry_run) {
        for (const auto& row : rows) {
            print_prompt(out, "summarize", row.label,
                         render_summary_request(extract_visual_sections(fetch_article(row.article_name, provider))));
        }
        return kExitOk;
    }
    auto chat = make_backend(config.chat);
    KbBuildOptions options;
    options.rank = rank_from_string(flags.rank);
    options.jobs = config.jobs;
    options.warn = [&err](const std::string& label, const std::string& message) {
        err << "warning: " << label << ": " << message << '\n';
    };
    const KnowledgeBase kb = build_knowledge_base(rows, provider, *chat, options);
    write_or_print(flags.out, to_json(kb).dump(2) + "\n", out);
    return kExitOk;
}

// ---- classify ------------------------------------------------------------------

struct ClassifyFlags {
    std::string images;
    std::string kb;
    std::vector<std::string> rank_kbs;
    std::optional<int> n;
    std::optional<int> fanout;
    bool hierarchical = false;
    std::optional<std::string> instructions;
    std::optional<std::string> out;
    std::optional<std::string> failures;
};

int cmd_classify(const CommonFlags& common, const ClassifyFlags& flags, std::ostream& out, std::ostream& err) {
    PipelineConfig config = resolve_config(common);
    if (flags.n) config.n_samples = *flags.n;
    if (flags.fanout) config.fanout_limit = *flags.fanout;
    config.validate();

    ClassifyOptions options;
    options.n_samples = config.n_samples;
    options.caption_temperature = config.caption_temperature;
    options.seed = config.seed;
    options.hierarchical = flags.hierarchical;
    options.hierarchy.fanout_limit = config.fanout_limit;
    if (flags.instructions) options.pool = InstructionPool::from_lines(read_file(*flags.instructions));
    options.pool.validate();

    const auto entries = load_manifest(flags.images);
    KnowledgeBase kb = load_knowledge_base(flags.kb);
    ClassifyContext context;
    if (flags.hierarchical) {
        std::vector<KnowledgeBase> rank_kbs;
        for (const auto& path : flags.rank_kbs) rank_kbs.push_back(load_knowledge_base(path));
        context = ClassifyContext::hierarchical(std::move(kb), std::move(rank_kbs));
    } else {
        context = ClassifyContext::flat(std::move(kb));
    }

    if (common.dry_run) {
        const std::string placeholder(prompts::kLmmCaption);
        for (const auto& entry : entries) {
            Rng rng(derive_seed(options.seed, entry.image_id));
            for (int i = 0; i < options.n_samples; ++i) {
                print_prompt(out, "caption", entry.image_id, std::nullopt, pick_instruction(options.pool, rng).text);
            }
            KnowledgeBase first_stage = context.kb;
            if (flags.hierarchical &&
                context.tree.labels_under(std::nullopt).size() > static_cast<std::size_t>(options.hierarchy.fanout_limit)) {
                first_stage = kb_for_children(context.tree, context.store, std::nullopt);
            }
            print_prompt(out, "match", entry.image_id, render_matching_prompt(placeholder, first_stage));
        }
        return kExitOk;
    }

    auto vision = make_backend(config.vision);
    // A single mock script may serve both roles.
    auto chat = (config.chat.kind == BackendKind::Mock && config.vision.kind == BackendKind::Mock &&
                 config.chat.script_path == config.vision.script_path)
                    ? vision
                    : make_backend(config.chat);
    const ClassifyResult result = classify_manifest(entries, context, *vision, *chat, options);
    write_or_print(flags.out, to_jsonl(result.predictions), out);

    std::string failure_lines;
    for (const auto& f : result.failures) {
        err << "error: " << f.image_id << ": [" << f.code << "] " << f.message << '\n';
        failure_lines += json{{"image_id", f.image_id}, {"code", f.code}, {"message", f.message}}.dump() + "\n";
    }
    if (flags.failures) write_file(*flags.failures, failure_lines);
    return result.failures.empty() ? kExitOk : kExitRuntime;
}

// ---- augment -------------------------------------------------------------------

struct AugmentFlags {
    // pseudo
    std::string images;
    std::string kb;
    std::optional<std::string> out;
    std::optional<std::string> captions_out;
    std::optional<std::string> instructions;
    bool no_color_filter = false;
    std::optional<int> epsilon;
    std::optional<double> crop_fraction;
    // features
    std::vector<std::string> labels;
    // combine
    std::string features;
};

int cmd_augment_pseudo(const CommonFlags& common, const AugmentFlags& flags, std::ostream& out, std::ostream& err) {
    PipelineConfig config = resolve_config(common);
    if (flags.epsilon) config.epsilon = *flags.epsilon;
    if (flags.crop_fraction) config.crop_fraction = *flags.crop_fraction;
    config.validate();
    ColorPolicy policy{!flags.no_color_filter, config.crop_fraction, config.epsilon};
    InstructionPool pool =
        flags.instructions ? InstructionPool::from_lines(read_file(*flags.instructions)) : InstructionPool::defaults();
    pool.validate();

    const auto entries = load_manifest(flags.images);
    const KnowledgeBase kb = load_knowledge_base(flags.kb);
    auto lookup = [&kb](const ManifestEntry& e) -> const SpeciesEntry& {
        if (!e.caption) fail(ErrorCode::Precondition, "manifest entry " + e.image_id + " has no caption");
        const std::string label = to_lower(trim(e.label ? *e.label : e.truth.value_or("")));
        const SpeciesEntry* entry = kb.find(label);
        if (!entry) fail(ErrorCode::NotFound, "no knowledge-base entry for '" + label + "' (" + e.image_id + ")");
        return *entry;
    };

    if (common.dry_run) {
        for (const auto& e : entries) {
            const SpeciesEntry& entry = lookup(e);
            std::string caption = *e.caption;
            if (policy.enabled &&
                detect_low_color_variation(load_image(e.path), policy.crop_fraction, policy.epsilon).low_color_variation) {
                print_prompt(out, "strip_color", e.image_id, render_strip_color_request(caption));
                caption = std::string(prompts::kLmmCaption);
            }
            print_prompt(out, "inject", e.image_id, render_inject_request(caption, entry.description));
        }
        return kExitOk;
    }

    auto chat = make_backend(config.chat);
    std::vector<InstructionSample> samples;
    std::string caption_lines;
    int failures = 0;
    for (const auto& e : entries) {
        try {
            const PseudoCaption pseudo = make_pseudo_caption(e.image_id, load_image(e.path), *e.caption, lookup(e),
                                                             *chat, policy);
            caption_lines += json{{"image_id", pseudo.image_id},
                                  {"base_caption", pseudo.base_caption},
                                  {"final_caption", pseudo.final_caption},
                                  {"color_filtered", pseudo.color_filtered},
                                  {"expert_source_label", pseudo.expert_source_label}}
                                 .dump() +
                             "\n";
            Rng rng(derive_seed(config.seed, e.image_id));
            samples.push_back(make_conversation(e.image_id, e.path, pseudo.final_caption, pool, rng));
        } catch (const Error& ex) {
            if (ex.code() == ErrorCode::Precondition) throw;
            err << "error: " << e.image_id << ": [" << code_name(ex.code()) << "] " << ex.what() << '\n';
            ++failures;
        }
    }
    if (flags.captions_out) write_file(*flags.captions_out, caption_lines);
    write_or_print(flags.out, dataset_to_json(samples).dump(2) + "\n", out);
    return failures == 0 ? kExitOk : kExitRuntime;
}

std::string template_or_default(const std::optional<std::string>& path, std::string_view fallback) {
    return path ? prompts::load_template(*path) : std::string(fallback);
}

int cmd_augment_features(const CommonFlags& common, const AugmentFlags& flags, std::ostream& out) {
    const PipelineConfig config = resolve_config(common);
    const std::string tmpl = template_or_default(config.feature_list_template, prompts::kFeatureListPrompt);
    const KnowledgeBase kb = load_knowledge_base(flags.kb);
    std::vector<const SpeciesEntry*> selected;
    if (flags.labels.empty()) {
        for (const auto& e : kb.entries) selected.push_back(&e);
    } else {
        for (const auto& label : flags.labels) {
            const SpeciesEntry* e = kb.find(to_lower(trim(label)));
            if (!e) fail(ErrorCode::NotFound, "no knowledge-base entry for '" + label + "'");
            selected.push_back(e);
        }
    }
    if (common.dry_run) {
        for (const auto* e : selected) {
            print_prompt(out, "feature_list", e->label, render_feature_list_request(e->description, tmpl));
        }
        return kExitOk;
    }
    auto chat = make_backend(config.chat);
    std::string lines;
    for (const auto* e : selected) {
        lines += json{{"label", e->label},
                      {"template_version", prompts::kFeatureListVersion},
                      {"features", extract_feature_list(e->description, *chat, tmpl)}}
                     .dump() +
                 "\n";
    }
    write_or_print(flags.out, lines, out);
    return kExitOk;
}

int cmd_augment_combine(const CommonFlags& common, const AugmentFlags& flags, std::ostream& out, std::ostream& err) {
    const PipelineConfig config = resolve_config(common);
    const std::string tmpl = template_or_default(config.feature_combine_template, prompts::kFeatureCombinePrompt);
    struct Annotated {
        std::string sample_id;
        std::vector<FeatureVisibility> features;
        bool colors_discernible = true;
    };
    std::vector<Annotated> samples;
    for (const auto& line : split(read_file(flags.features), '\n')) {
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            Annotated a;
            a.sample_id = doc.at("sample_id").get<std::string>();
            a.colors_discernible = doc.value("colors_discernible", true);
            for (const auto& f : doc.at("features")) {
                a.features.push_back(
                    {f.at("feature").get<std::string>(), visibility_from_string(f.at("visibility").get<std::string>())});
            }
            samples.push_back(std::move(a));
        } catch (const json::exception& e) {
            fail(ErrorCode::Precondition, std::string("malformed feature annotation: ") + e.what());
        }
    }
    if (common.dry_run) {
        for (const auto& a : samples) {
            try {
                print_prompt(out, "feature_combine", a.sample_id, render_combine_request(a.features, tmpl));
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoVisibleFeatures) throw;
                err << "skip: " << a.sample_id << ": " << e.what() << '\n';
            }
        }
        return kExitOk;
    }
    auto chat = make_backend(config.chat);
    std::string lines;
    int failures = 0;
    for (const auto& a : samples) {
        try {
            lines += json{{"sample_id", a.sample_id},
                          {"template_version", prompts::kFeatureCombineVersion},
                          {"caption", combine_visible_features(a.features, a.colors_discernible, *chat, tmpl)}}
                         .dump() +
                     "\n";
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Precondition) throw;
            err << "error: " << a.sample_id << ": [" << code_name(e.code()) << "] " << e.what() << '\n';
            ++failures;
        }
    }
    write_or_print(flags.out, lines, out);
    return failures == 0 ? kExitOk : kExitRuntime;
}

// ---- eval / sequences ------------------------------------------------------------

struct EvalFlags {
    std::string preds;
    std::optional<std::string> truth;
    std::optional<int> bins;
    std::optional<std::string> thresholds;
    std::optional<std::string> curve_csv;
    std::optional<std::string> bins_csv;
    std::optional<std::string> out;
};

std::vector<Prediction> load_with_truth(const std::string& preds, const std::optional<std::string>& truth) {
    auto records = load_prediction_log(preds);
    if (truth) attach_truth(records, parse_truth_csv(read_file(*truth)));
    return records;
}

int cmd_eval(const CommonFlags& common, const EvalFlags& flags, std::ostream& out, std::ostream& err) {
    PipelineConfig config = resolve_config(common);
    if (flags.bins) config.n_bins = *flags.bins;
    config.validate();
    if (common.dry_run) {
        err << "eval makes no backend calls; nothing to render\n";
        return kExitOk;
    }
    const auto records = load_with_truth(flags.preds, flags.truth);
    std::optional<std::vector<double>> thresholds;
    if (flags.thresholds) thresholds = parse_threshold_list(*flags.thresholds);
    const EvaluationReport report = evaluate(records, config.n_bins, thresholds);
    if (flags.curve_csv) write_file(*flags.curve_csv, curve_csv(report.ar_ca_curve));
    if (flags.bins_csv) write_file(*flags.bins_csv, bins_csv(report.calibration.bins));
    write_or_print(flags.out, to_json(report).dump(2) + "\n", out);
    return kExitOk;
}

struct SequenceFlags {
    std::string preds;
    std::optional<std::string> truth;
    std::optional<double> window;
    std::optional<std::string> out;
};

int cmd_sequences(const CommonFlags& common, const SequenceFlags& flags, std::ostream& out, std::ostream& err) {
    PipelineConfig config = resolve_config(common);
    if (flags.window) config.sequence_window = *flags.window;
    config.validate();
    if (common.dry_run) {
        err << "sequences makes no backend calls; nothing to render\n";
        return kExitOk;
    }
    const auto records = load_with_truth(flags.preds, flags.truth);
    const auto sequences = group_sequences(records, config.sequence_window);
    const auto relabeled = apply_sequence_predictions(records, sequences);
    if (flags.out) write_file(*flags.out, to_jsonl(relabeled));

    json summary = {{"records", records.size()}, {"sequences", sequences.size()}, {"window", config.sequence_window}};
    const bool all_truth = std::all_of(records.begin(), records.end(), [](const Prediction& p) { return p.truth.has_value(); });
    if (all_truth && !records.empty()) {
        const auto before = micro_macro_accuracy(records);
        const auto after = micro_macro_accuracy(relabeled);
        summary["frame_micro_accuracy"] = before.micro;
        summary["frame_macro_accuracy"] = before.macro;
        summary["sequence_micro_accuracy"] = after.micro;
        summary["sequence_macro_accuracy"] = after.macro;
    }
    if (flags.out) {
        out << summary.dump(2) << '\n';
    } else {
        out << to_jsonl(relabeled);
        err << summary.dump() << '\n';
    }
    return kExitOk;
}

// ---- score ---------------------------------------------------------------------

struct ScoreFlags {
    std::string samples;
    bool retry_unparseable = false;
    std::optional<std::string> out;
};

int cmd_score(const CommonFlags& common, const ScoreFlags& flags, std::ostream& out) {
    const PipelineConfig config = resolve_config(common);
    const auto samples = parse_scoring_samples(read_file(flags.samples));
    if (common.dry_run) {
        for (const auto& s : samples) {
            print_prompt(out, "relevance", s.sample_id, render_relevance_prompt(s.reference, s.generated));
            print_prompt(out, "hallucination", s.sample_id, render_hallucination_prompt(s.reference, s.generated));
        }
        return kExitOk;
    }
    auto chat = make_backend(config.chat);
    std::vector<ScoreRecord> records;
    for (const auto& s : samples) records.push_back(score_sample(s, *chat, {flags.retry_unparseable}));
    write_or_print(flags.out, scores_report(records).dump(2) + "\n", out);
    return kExitOk;
}

// ---- serve ---------------------------------------------------------------------

struct ServeFlags {
    std::optional<std::string> state_dir;
    std::optional<std::string> host;
    std::optional<int> port;
    std::optional<std::string> media_root;
    std::optional<std::string> ui_root;
    std::optional<std::string> preds;
    std::optional<std::string> kb;
    double p = 0.6;
    std::optional<std::string> run_id;
};

ReviewServer* g_active_server = nullptr;

extern "C" void handle_stop_signal(int) {
    if (g_active_server) g_active_server->stop();
}

int cmd_serve(const CommonFlags& common, const ServeFlags& flags, std::ostream& out, std::ostream& err) {
    PipelineConfig config = resolve_config(common);
    if (flags.state_dir) config.review.state_dir = *flags.state_dir;
    if (flags.host) config.review.host = *flags.host;
    if (flags.port) config.review.port = *flags.port;
    if (flags.media_root) config.review.media_root = *flags.media_root;
    if (flags.ui_root) config.review.ui_root = *flags.ui_root;
    config.validate();
    if (flags.preds.has_value() != flags.kb.has_value()) {
        fail(ErrorCode::Precondition, "--preds and --kb must be given together");
    }
    if (common.dry_run) {
        out << json{{"state_dir", config.review.state_dir},
                    {"host", config.review.host},
                    {"port", config.review.port},
                    {"lease_minutes", config.review.lease_minutes},
                    {"token", config.review.token.has_value()}}
                   .dump()
            << '\n';
        return kExitOk;
    }

    ReviewOptions options;
    options.state_dir = config.review.state_dir;
    options.lease_duration = std::chrono::minutes(config.review.lease_minutes);
    options.snapshot_every = config.review.snapshot_every;
    ReviewService service(options);
    if (flags.preds) {
        const auto run = service.create_run(load_prediction_log(*flags.preds), load_knowledge_base(*flags.kb), flags.p,
                                            *flags.kb, flags.run_id);
        err << "created " << run->run_id << ": " << run->accepted.size() << " accepted, " << run->queue.size()
            << " queued\n";
    }
    ServerOptions server_options;
    server_options.host = config.review.host;
    server_options.port = config.review.port;
    server_options.token = config.review.token;
    if (config.review.media_root) server_options.media_root = *config.review.media_root;
    if (config.review.ui_root) server_options.ui_root = *config.review.ui_root;
    ReviewServer server(service, server_options);
    g_active_server = &server;
    std::signal(SIGINT, handle_stop_signal);
    std::signal(SIGTERM, handle_stop_signal);
    err << "serving on " << config.review.host << ":" << config.review.port << '\n';
    server.run();
    g_active_server = nullptr;
    service.snapshot();
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Zero-shot animal species classification from captions", "zoosight"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    CommonFlags common;

    auto* kb = app.add_subcommand("kb", "Knowledge base tools");
    kb->require_subcommand(1);
    KbFlags kb_flags;
    auto* kb_build = kb->add_subcommand("build", "Summarize articles into a knowledge base");
    add_common(kb_build, common);
    kb_build->add_option("--species", kb_flags.species, "Species list (one per line, or CSV with a label column)")
        ->required()
        ->check(CLI::ExistingFile);
    kb_build->add_option("--articles", kb_flags.articles, "Directory of <slug>.json articles")
        ->required()
        ->check(CLI::ExistingDirectory);
    kb_build->add_option("--rank", kb_flags.rank, "Rank of the entries")
        ->check(CLI::IsMember({"class", "order", "family", "genus", "species"}));
    kb_build->add_option("--out", kb_flags.out, "Output path (stdout when omitted)");

    ClassifyFlags cf;
    auto* classify = app.add_subcommand("classify", "Caption and match a manifest of images");
    add_common(classify, common);
    classify->add_option("--images", cf.images, "Image manifest (JSONL)")->required()->check(CLI::ExistingFile);
    classify->add_option("--kb", cf.kb, "Knowledge base of the fine-grained labels")->required()->check(CLI::ExistingFile);
    classify->add_option("--rank-kb", cf.rank_kbs, "Knowledge base for a coarser rank (repeatable)")
        ->check(CLI::ExistingFile);
    classify->add_option("--n", cf.n, "Captions per image")->check(CLI::PositiveNumber);
    classify->add_option("--fanout", cf.fanout, "Maximum knowledge-base entries per matching prompt")
        ->check(CLI::Range(2, 1 << 20));
    classify->add_flag("--hierarchical", cf.hierarchical, "Descend the taxonomy");
    classify->add_option("--instructions", cf.instructions, "Caption instruction pool, one per line")
        ->check(CLI::ExistingFile);
    classify->add_option("--out", cf.out, "Prediction log path (stdout when omitted)");
    classify->add_option("--failures", cf.failures, "Write per-image failures as JSONL");

    auto* augment = app.add_subcommand("augment", "Build instruction-tuning data");
    augment->require_subcommand(1);
    AugmentFlags af;
    auto* pseudo = augment->add_subcommand("pseudo", "Pseudo-captions and conversations from raw captions");
    add_common(pseudo, common);
    pseudo->add_option("--images", af.images, "Manifest with caption and label fields")
        ->required()
        ->check(CLI::ExistingFile);
    pseudo->add_option("--kb", af.kb, "Knowledge base")->required()->check(CLI::ExistingFile);
    pseudo->add_option("--out", af.out, "Dataset JSON path (stdout when omitted)");
    pseudo->add_option("--captions-out", af.captions_out, "Write pseudo-captions as JSONL");
    pseudo->add_option("--instructions", af.instructions, "Instruction pool, one per line")->check(CLI::ExistingFile);
    pseudo->add_flag("--no-color-filter", af.no_color_filter, "Skip color removal");
    pseudo->add_option("--epsilon", af.epsilon, "Color spread threshold")->check(CLI::NonNegativeNumber);
    pseudo->add_option("--crop-fraction", af.crop_fraction, "Center crop fraction")->check(CLI::Range(0.0, 1.0));

    auto* features = augment->add_subcommand("features", "Extract visual feature lists from descriptions");
    add_common(features, common);
    features->add_option("--kb", af.kb, "Knowledge base")->required()->check(CLI::ExistingFile);
    features->add_option("--labels", af.labels, "Restrict to these labels")->delimiter(',');
    features->add_option("--out", af.out, "Output JSONL (stdout when omitted)");

    auto* combine = augment->add_subcommand("combine", "Combine visible features into captions");
    add_common(combine, common);
    combine->add_option("--features", af.features, "Feature visibility annotations (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    combine->add_option("--out", af.out, "Output JSONL (stdout when omitted)");

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "Accuracy, calibration and abstention metrics");
    add_common(eval, common);
    eval->add_option("--preds", ef.preds, "Prediction log")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", ef.truth, "CSV of image_id,label")->check(CLI::ExistingFile);
    eval->add_option("--bins", ef.bins, "Calibration bins")->check(CLI::PositiveNumber);
    eval->add_option("--thresholds", ef.thresholds, "Comma-separated abstention thresholds");
    eval->add_option("--curve-csv", ef.curve_csv, "Write the AR/CA curve as CSV");
    eval->add_option("--bins-csv", ef.bins_csv, "Write reliability bins as CSV");
    eval->add_option("--out", ef.out, "Report path (stdout when omitted)");

    ScoreFlags sf;
    auto* score = app.add_subcommand("score", "Relevance and hallucination scores for captions");
    add_common(score, common);
    score->add_option("--samples", sf.samples, "JSONL of {sample_id, reference, generated}")
        ->required()
        ->check(CLI::ExistingFile);
    score->add_flag("--retry-unparseable", sf.retry_unparseable, "Ask again once when a score cannot be parsed");
    score->add_option("--out", sf.out, "Report path (stdout when omitted)");

    SequenceFlags qf;
    auto* sequences = app.add_subcommand("sequences", "Pool votes over camera-trap sequences");
    add_common(sequences, common);
    sequences->add_option("--preds", qf.preds, "Prediction log")->required()->check(CLI::ExistingFile);
    sequences->add_option("--truth", qf.truth, "CSV of image_id,label")->check(CLI::ExistingFile);
    sequences->add_option("--window", qf.window, "Maximum gap between frames, seconds")->check(CLI::NonNegativeNumber);
    sequences->add_option("--out", qf.out, "Relabeled prediction log");

    ServeFlags vf;
    auto* serve = app.add_subcommand("serve", "Run the expert review service");
    add_common(serve, common);
    serve->add_option("--state-dir", vf.state_dir, "Event log and snapshot directory");
    serve->add_option("--host", vf.host, "Bind address");
    serve->add_option("--port", vf.port, "Port")->check(CLI::Range(0, 65535));
    serve->add_option("--media-root", vf.media_root, "Directory served under /media")->check(CLI::ExistingDirectory);
    serve->add_option("--ui-root", vf.ui_root, "Built review UI")->check(CLI::ExistingDirectory);
    serve->add_option("--preds", vf.preds, "Create a run from this prediction log at startup")->check(CLI::ExistingFile);
    serve->add_option("--kb", vf.kb, "Knowledge base defining the run's label space")->check(CLI::ExistingFile);
    serve->add_option("--p", vf.p, "Confidence threshold of the startup run")->check(CLI::Range(0.0, 1.0));
    serve->add_option("--run-id", vf.run_id, "Id of the startup run");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        // Show the help of the innermost subcommand that was selected.
        const CLI::App* target = &app;
        while (true) {
            const auto subs = target->get_subcommands();
            if (subs.empty()) break;
            target = subs.front();
        }
        err << target->help();
        return kExitUsage;
    }

    try {
        if (kb_build->parsed()) return cmd_kb_build(common, kb_flags, out, err);
        if (classify->parsed()) return cmd_classify(common, cf, out, err);
        if (pseudo->parsed()) return cmd_augment_pseudo(common, af, out, err);
        if (features->parsed()) return cmd_augment_features(common, af, out);
        if (combine->parsed()) return cmd_augment_combine(common, af, out, err);
        if (eval->parsed()) return cmd_eval(common, ef, out, err);
        if (score->parsed()) return cmd_score(common, sf, out);
        if (sequences->parsed()) return cmd_sequences(common, qf, out, err);
        if (serve->parsed()) return cmd_serve(common, vf, out, err);
    } catch (const Error& e) {
        err << "error [" << code_name(e.code()) << "]: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, out, err);
}

}  // namespace zoosight
