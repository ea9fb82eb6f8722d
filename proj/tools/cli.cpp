#include "cli.hpp"

#include "zsar/ablation.hpp"
#include "zsar/errors.hpp"
#include "zsar/evaluation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace zsar::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error("UsageError", what) {}
};

struct Options {
    std::string config;
    std::string classes;
    std::string cache;
    std::string video;
    std::vector<std::string> manifests;
    std::string backend;
    std::string backbone;
    std::size_t frames = 0;
    std::string kinds;
    std::string templates;
    std::string prepend_class;
    std::string use_templates;
    unsigned workers = 0;
    std::string format = "table";
    std::string output;
    std::string grid = "all";
    std::string llm_model;
    std::string llm_ids;
    bool dry_run = false;
};

bool parse_bool(const std::string& flag, std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw UsageError(flag + " expects a boolean (true|false), got '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

RunConfig build_config(const Options& o) {
    RunConfig cfg;
    if (o.config.empty()) {
        cfg.descriptors.templates = default_templates();
    } else {
        cfg = RunConfig::load(o.config);
    }
    if (!o.backbone.empty()) cfg.use_backbone(o.backbone);
    if (!o.backend.empty()) {
        const BackendKind kind = parse_backend_kind(o.backend);
        cfg.encoder.backend = kind;
        for (auto& [_, spec] : cfg.backbones) spec.backend = kind;
    }
    if (o.frames != 0) cfg.frames = o.frames;
    if (!o.kinds.empty()) cfg.descriptors.kinds = parse_descriptor_kinds(o.kinds);
    if (!o.templates.empty()) cfg.descriptors.templates = load_templates(o.templates);
    if (!o.prepend_class.empty()) cfg.descriptors.prepend_class = parse_bool("--prepend-class", o.prepend_class);
    if (!o.use_templates.empty()) cfg.descriptors.use_templates = parse_bool("--use-templates", o.use_templates);
    if (!o.cache.empty()) cfg.cache = o.cache;
    if (!o.classes.empty()) cfg.dataset.classes = o.classes;
    if (!o.manifests.empty()) {
        cfg.dataset.splits.assign(o.manifests.begin(), o.manifests.end());
    }
    if (o.workers != 0) cfg.workers = o.workers;
    if (!o.llm_model.empty()) cfg.llm.model_id = o.llm_model;
    if (!o.llm_ids.empty()) cfg.ablation.llm_ids = split_csv(o.llm_ids);
    return cfg;
}

LabelSpace require_labels(const RunConfig& cfg) {
    if (cfg.dataset.classes.empty()) throw UsageError("--classes (or dataset.classes in --config) is required");
    if (!fs::exists(cfg.dataset.classes)) {
        throw EnvironmentError("classes file not found: " + cfg.dataset.classes.string());
    }
    return LabelSpace::load(cfg.dataset.classes);
}

void write_file(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << body) || !out.flush()) throw IoError("cannot write " + path.string());
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

EvalDeps deps_for(const RunConfig& cfg, const Environment& env, std::unique_ptr<ChatTransport>& holder) {
    EvalDeps deps;
    deps.encoder_factory = env.encoder_factory;
    if (cfg.descriptors.needs_descriptors()) {
        holder = env.transport_factory(cfg.llm, false);
        deps.transport = holder.get();
    }
    return deps;
}

void print_config_summary(std::ostream& out, const RunConfig& cfg) {
    out << "encoder: " << to_string(cfg.encoder.backend) << " " << cfg.encoder.model_tag << "\n"
        << "frames: " << cfg.frames << " (" << to_string(cfg.sampling) << ")\n"
        << "descriptors: " << format_descriptor_kinds(cfg.descriptors.kinds)
        << " templates=" << (cfg.descriptors.use_templates ? "yes" : "no") << " ("
        << cfg.descriptors.templates.size() << ") prepend_class=" << (cfg.descriptors.prepend_class ? "yes" : "no")
        << "\n";
}

// ------------------------------------------------------------- commands

int cmd_gen_descriptors(const Options& o, const Environment& env) {
    RunConfig cfg = build_config(o);
    const LabelSpace labels = require_labels(cfg);
    if (cfg.cache.empty()) throw UsageError("--cache (or cache in --config) is required");
    cfg.llm.validate();
    DescriptorCache cache = DescriptorCache::open(cfg.cache);
    const std::size_t warm = lookup_all(labels, cache, cfg.llm.model_id).descriptors.size();
    auto& out = *env.out;
    if (o.dry_run) {
        const bool key_set = cfg.llm.api_key_env_var.empty() || std::getenv(cfg.llm.api_key_env_var.c_str()) != nullptr;
        out << "dry run: " << labels.size() << " classes, " << warm << " cached, " << labels.size() - warm
            << " to generate with " << cfg.llm.model_id << " at " << cfg.llm.endpoint_url << " (API key "
            << (key_set ? "present" : "missing") << ")\n";
        return kOk;
    }
    auto transport = env.transport_factory(cfg.llm, true);
    DescriptorGenerator generator(*transport, cfg.llm);
    const GenerateAllResult result = generate_all(labels, generator, cache, cfg.workers);
    if (o.format == "json") {
        nlohmann::json j;
        j["classes"] = labels.size();
        j["cache_hits"] = result.cache_hits;
        j["generated"] = result.generated;
        nlohmann::json failed = nlohmann::json::array();
        for (const auto& f : result.failures) {
            failed.push_back({{"class", f.action.raw_id}, {"error", f.error_kind}, {"message", f.message}});
        }
        j["failed"] = failed;
        out << j.dump(2) << "\n";
    } else {
        out << "classes: " << labels.size() << "  cached: " << result.cache_hits
            << "  generated: " << result.generated << "  failed: " << result.failures.size() << "\n";
    }
    for (const auto& f : result.failures) {
        *env.err << "failed: " << f.action.raw_id << ": " << f.error_kind << ": " << one_line(f.message) << "\n";
    }
    if (!result.complete()) {
        throw MissingDescriptorsError(std::to_string(result.failures.size()) +
                                      " classes failed; rerun gen-descriptors to retry them");
    }
    return kOk;
}

int cmd_embed_classes(const Options& o, const Environment& env) {
    RunConfig cfg = build_config(o);
    const LabelSpace labels = require_labels(cfg);
    cfg.descriptors.validate();
    cfg.encoder.validate();
    const fs::path target = o.output.empty() ? fs::path("class_embeddings.emb") : fs::path(o.output);
    auto& out = *env.out;
    if (o.dry_run) {
        out << "dry run: " << labels.size() << " classes -> " << target.string() << "\n";
        print_config_summary(out, cfg);
        return kOk;
    }
    const auto descriptors = resolve_descriptors(cfg, labels, nullptr);
    const auto encoder = env.encoder_factory(cfg.encoder);
    const auto classes = build_class_embeddings(labels, descriptors, cfg.descriptors, *encoder,
                                                cfg.normalize_before_average, cfg.workers);
    write_class_embeddings(target, classes);
    std::size_t texts = 0;
    for (const auto& c : classes) texts += c.M;
    out << "wrote " << classes.size() << " class embeddings (dim " << encoder->embed_dim() << ", " << texts
        << " texts) to " << target.string() << "\n";
    return kOk;
}

int cmd_classify(const Options& o, const Environment& env) {
    RunConfig cfg = build_config(o);
    const LabelSpace labels = require_labels(cfg);
    cfg.descriptors.validate();
    cfg.encoder.validate();
    if (cfg.frames < 1) throw UsageError("--frames must be >= 1");
    if (!fs::exists(o.video)) throw DecodeError(o.video + ": no such file or directory");
    auto& out = *env.out;
    if (o.dry_run) {
        out << "dry run: classify " << o.video << " against " << labels.size() << " classes\n";
        print_config_summary(out, cfg);
        return kOk;
    }
    std::unique_ptr<ChatTransport> holder;
    const EvalDeps deps = deps_for(cfg, env, holder);
    const auto descriptors = resolve_descriptors(cfg, labels, deps.transport);
    const auto encoder = env.encoder_factory(cfg.encoder);
    const auto classes = build_class_embeddings(labels, descriptors, cfg.descriptors, *encoder,
                                                cfg.normalize_before_average, cfg.workers);
    const Prediction p = classify_video(o.video, classes, *encoder, cfg.frames, cfg.sampling,
                                        cfg.normalize_before_average, cfg.encoder.image_size);
    const std::size_t k = std::min<std::size_t>(5, p.ranking.size());
    if (o.format == "json") {
        nlohmann::json ranking = nlohmann::json::array();
        for (std::size_t r = 0; r < k; ++r) {
            ranking.push_back({{"rank", r + 1},
                               {"class", p.ranking[r].first.raw_id},
                               {"index", p.ranking[r].first.index},
                               {"score", p.ranking[r].second}});
        }
        out << nlohmann::json{{"video", o.video}, {"ranking", ranking}}.dump(2) << "\n";
        return kOk;
    }
    std::size_t w = 5;
    for (std::size_t r = 0; r < k; ++r) w = std::max(w, p.ranking[r].first.raw_id.size());
    for (std::size_t r = 0; r < k; ++r) {
        out << r + 1 << "  " << std::left << std::setw(static_cast<int>(w)) << p.ranking[r].first.raw_id << std::right
            << "  " << std::fixed << std::setprecision(6) << p.ranking[r].second << "\n";
    }
    return kOk;
}

void require_splits(const RunConfig& cfg) {
    if (cfg.dataset.splits.empty()) throw UsageError("--manifest (or dataset.splits in --config) is required");
}

int cmd_evaluate(const Options& o, const Environment& env) {
    RunConfig cfg = build_config(o);
    require_splits(cfg);
    cfg.validate(true);
    auto& out = *env.out;
    const fs::path target = o.output.empty() ? fs::path("report.json") : fs::path(o.output);
    if (o.dry_run) {
        const DatasetManifest m = DatasetManifest::load(cfg.dataset);
        out << "dry run: " << m.classes.size() << " classes";
        for (const auto& s : m.splits) out << ", " << s.name << " " << s.entries.size() << " samples";
        out << " -> " << target.string() << "\n";
        print_config_summary(out, cfg);
        return kOk;
    }
    std::unique_ptr<ChatTransport> holder;
    const EvalReport report = evaluate(cfg, deps_for(cfg, env, holder));
    write_file(target, report.to_json() + "\n");
    fs::path table_path = target;
    table_path.replace_extension(".txt");
    write_file(table_path, report.to_table());
    out << (o.format == "json" ? report.to_json(false) + "\n" : report.to_table());
    return kOk;
}

int cmd_ablate(const Options& o, const Environment& env) {
    RunConfig cfg = build_config(o);
    require_splits(cfg);
    cfg.validate(true);
    std::vector<std::string> grids;
    if (o.grid == "all") {
        grids = ablation_grids();
    } else {
        grids = split_csv(o.grid);
    }
    std::vector<AblationPlan> plans;
    for (const auto& g : grids) plans.push_back(plan_ablation(g, cfg));
    for (const auto& p : plans) {
        for (const auto& c : p.cells) c.config.validate(true);
    }
    auto& out = *env.out;
    const fs::path dir = o.output.empty() ? fs::path(".") : fs::path(o.output);
    if (o.dry_run) {
        for (const auto& p : plans) {
            out << "dry run: ablation " << p.name << ", " << p.cells.size() << " evaluations -> "
                << (dir / ("ablation-" + p.name + ".json")).string() << "\n";
        }
        return kOk;
    }
    std::unique_ptr<ChatTransport> holder;
    EvalDeps deps;
    deps.encoder_factory = env.encoder_factory;
    holder = env.transport_factory(cfg.llm, false);
    deps.transport = holder.get();
    for (const auto& p : plans) {
        const AblationTable table = run_ablation(p, deps);
        write_file(dir / ("ablation-" + p.name + ".json"), table.to_json() + "\n");
        write_file(dir / ("ablation-" + p.name + ".txt"), table.to_table());
        out << (o.format == "json" ? table.to_json() + "\n" : table.to_table());
    }
    return kOk;
}

}  // namespace

Environment default_environment() {
    Environment env;
    env.out = &std::cout;
    env.err = &std::cerr;
    env.transport_factory = [](const LlmConfig& cfg, bool required) -> std::unique_ptr<ChatTransport> {
        if (!required && !cfg.api_key_env_var.empty()) {
            const char* key = std::getenv(cfg.api_key_env_var.c_str());
            if (key == nullptr || *key == '\0') return nullptr;
        }
        return std::make_unique<HttpChatTransport>(cfg);
    };
    env.encoder_factory = make_encoder;
    return env;
}

int run(const std::vector<std::string>& args, Environment env) {
    if (env.out == nullptr) env.out = &std::cout;
    if (env.err == nullptr) env.err = &std::cerr;
    if (!env.encoder_factory) env.encoder_factory = make_encoder;
    if (!env.transport_factory) env.transport_factory = default_environment().transport_factory;

    CLI::App app{"Zero-shot video action recognition with LLM-generated class descriptors"};
    app.name("zsar");
    app.require_subcommand(1, 1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--classes", o.classes, "Classes file, one raw id per line");
        sub->add_option("--cache", o.cache, "Descriptor cache (JSON)");
        sub->add_option("--llm-model", o.llm_model, "LLM model id");
        sub->add_option("--workers", o.workers, "Parallel workers")->check(CLI::PositiveNumber);
        sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "table"}));
        sub->add_flag("--dry-run", o.dry_run, "Validate only; no network, no writes");
    };
    auto encoder_opts = [&](CLI::App* sub) {
        sub->add_option("--backend", o.backend, "Encoder backend")->check(CLI::IsMember({"onnx", "file"}));
        sub->add_option("--backbone", o.backbone, "Named backbone from the config");
        sub->add_option("--kinds", o.kinds, "Descriptor kinds, comma separated");
        sub->add_option("--templates", o.templates, "Template file")->check(CLI::ExistingFile);
        sub->add_option("--prepend-class", o.prepend_class, "Prepend the class label (true|false)");
        sub->add_option("--use-templates", o.use_templates, "Wrap texts in templates (true|false)");
    };

    auto* gen = app.add_subcommand("gen-descriptors", "Generate and cache LLM descriptors for every class");
    common(gen);

    auto* embed = app.add_subcommand("embed-classes", "Precompute class embeddings into an embedding table");
    common(embed);
    encoder_opts(embed);
    embed->add_option("--output", o.output, "Output table (default class_embeddings.emb)");

    auto* classify = app.add_subcommand("classify", "Classify one video and print the Top-5 ranking");
    common(classify);
    encoder_opts(classify);
    classify->add_option("--video", o.video, "Video file or frame directory")->required();
    classify->add_option("--frames", o.frames, "Frames sampled per video (N)")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("evaluate", "Top-1/Top-5 over dataset splits");
    common(eval);
    encoder_opts(eval);
    eval->add_option("--manifest", o.manifests, "Split file(s): <path>\\t<class-id> per line");
    eval->add_option("--frames", o.frames, "Frames sampled per video (N)")->check(CLI::PositiveNumber);
    eval->add_option("--output", o.output, "Report path (default report.json, table next to it)");

    auto* ablate = app.add_subcommand("ablate", "Run ablation grids");
    common(ablate);
    encoder_opts(ablate);
    ablate->add_option("--manifest", o.manifests, "Split file(s)");
    ablate->add_option("--frames", o.frames, "Frames sampled per video (N)")->check(CLI::PositiveNumber);
    ablate->add_option("--grid", o.grid, "descriptors|prompts|backbone-frames|llm|all (comma separated)");
    ablate->add_option("--llm-ids", o.llm_ids, "LLM ids for the llm grid, comma separated");
    ablate->add_option("--output", o.output, "Directory for ablation-<grid>.json/.txt (default .)");

    auto& out = *env.out;
    auto& err = *env.err;
    CLI::App* active = nullptr;
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
        active = app.get_subcommands().front();
    } catch (const CLI::CallForHelp&) {
        CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        out << target->help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: UsageError: " << one_line(e.what()) << "\n";
        CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << target->help();
        return kUsage;
    }

    try {
        if (active == gen) return cmd_gen_descriptors(o, env);
        if (active == embed) return cmd_embed_classes(o, env);
        if (active == classify) return cmd_classify(o, env);
        if (active == eval) return cmd_evaluate(o, env);
        return cmd_ablate(o, env);
    } catch (const UsageError& e) {
        err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n" << active->help();
        return kUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return kUsage;
    } catch (const EnvironmentError& e) {
        err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return kEnvironment;
    } catch (const Error& e) {
        err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return kRuntime;
    } catch (const std::exception& e) {
        err << "error: InternalError: " << one_line(e.what()) << "\n";
        return kRuntime;
    }
}

}  // namespace zsar::cli
