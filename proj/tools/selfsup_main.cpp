#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "selfsup/evalgen.hpp"
#include "selfsup/jsonl.hpp"
#include "selfsup/pipeline.hpp"
#include "selfsup/validate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitConfig = 2;

std::optional<long long> env_number(const char* name) {
    const char* value = std::getenv(name);
    if (!value || !*value) return std::nullopt;
    char* end = nullptr;
    long long parsed = std::strtoll(value, &end, 10);
    if (end == value || *end != '\0') return std::nullopt;
    return parsed;
}

int run_generate(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                 std::optional<int> workers_flag) {
    selfsup::RunConfig cfg = selfsup::RunConfig::from_file(config_path);
    // precedence: flag > environment > config file
    if (auto env = env_number("SELFSUP_SEED"))
        cfg.seed = static_cast<std::uint64_t>(*env);
    if (auto env = env_number("SELFSUP_WORKERS")) cfg.workers = static_cast<int>(*env);
    if (seed_flag) cfg.seed = *seed_flag;
    if (workers_flag) cfg.workers = *workers_flag;

    selfsup::RunReport report = selfsup::generate(cfg);
    std::cout << report.to_json().dump(2) << "\n";
    return kExitOk;
}

int run_stats(const std::vector<std::string>& paths) {
    std::cout << selfsup::stats_files(paths).dump(2) << "\n";
    return kExitOk;
}

int run_validate(const std::vector<std::string>& paths) {
    selfsup::ValidationResult result = selfsup::validate_files(paths, std::cerr);
    if (result.ok()) {
        std::cout << "ok: " << result.lines << " records\n";
        return kExitOk;
    }
    std::cerr << "validation failed: " << result.violations << " violations, "
              << result.malformed << " malformed lines\n";
    return kExitValidation;
}

int run_render_eval(const std::string& task, const std::string& records_path,
                    std::size_t shots, const std::string& demos_path,
                    const std::string& templates_path, const std::string& out_path,
                    std::uint64_t seed) {
    std::vector<selfsup::EvalTemplate> extra;
    if (!templates_path.empty()) {
        std::ifstream in(templates_path);
        if (!in) throw selfsup::ConfigError("cannot open templates: " + templates_path);
        nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded())
            throw selfsup::ConfigError("template file is not valid JSON: " + templates_path);
        extra = selfsup::parse_templates(doc);
    }
    const selfsup::EvalTemplate* tpl = nullptr;
    for (const auto& t : extra)
        if (t.task == task) tpl = &t;
    if (!tpl) tpl = selfsup::find_builtin_template(task);
    if (!tpl) throw selfsup::ConfigError("unknown eval task: " + task);

    auto load_records = [&](const std::string& path) {
        std::vector<selfsup::EvalRecord> records;
        std::ifstream in(path);
        if (!in) throw selfsup::ConfigError("cannot open records: " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            auto rec = selfsup::eval_record_from_json(j, line_no);
            if (rec && rec->task == task) records.push_back(std::move(*rec));
        }
        return records;
    };

    std::vector<selfsup::EvalRecord> records = load_records(records_path);
    std::vector<selfsup::EvalRecord> demos;
    if (!demos_path.empty()) demos = load_records(demos_path);
    // demonstrations render with their gold label, so gold-less records
    // cannot serve as demos
    std::erase_if(demos, [](const selfsup::EvalRecord& r) { return r.gold.empty(); });

    std::ofstream file_out;
    if (!out_path.empty()) {
        file_out.open(out_path, std::ios::binary | std::ios::trunc);
        if (!file_out) throw selfsup::ConfigError("cannot write " + out_path);
    }
    std::ostream& out = out_path.empty() ? std::cout : file_out;

    bool pool_short = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& record = records[i];
        // demo pool defaults to the other records of the same file
        std::vector<selfsup::EvalRecord> pool;
        const std::vector<selfsup::EvalRecord>* pool_ptr = &demos;
        if (demos_path.empty()) {
            for (std::size_t j = 0; j < records.size(); ++j)
                if (j != i && !records[j].gold.empty()) pool.push_back(records[j]);
            pool_ptr = &pool;
        }
        selfsup::Rng rng(selfsup::derive_seed(seed, "eval/" + task, record.record_id));
        for (auto& inst : selfsup::assemble(record, *pool_ptr, shots, rng, *tpl, &pool_short))
            out << selfsup::to_json(inst).dump() << "\n";
    }
    if (pool_short)
        std::cerr << "warning: demonstration pool smaller than requested shots; used all\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised task data toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> workers_flag;
    auto* generate = app.add_subcommand("generate", "build training data from a corpus");
    generate->add_option("--config", config_path, "JSON run configuration")->required();
    generate->add_option("--seed", seed_flag, "override the global seed");
    generate->add_option("--workers", workers_flag, "override the worker count");

    std::vector<std::string> stats_paths;
    auto* stats = app.add_subcommand("stats", "summarize generated JSONL files");
    stats->add_option("files", stats_paths, "JSONL files")->required();

    std::vector<std::string> validate_paths;
    auto* validate = app.add_subcommand("validate", "re-check output invariants");
    validate->add_option("files", validate_paths, "JSONL files")->required();

    std::string eval_task, records_path, demos_path, templates_path, eval_out;
    std::size_t shots = 0;
    std::uint64_t eval_seed = 0;
    auto* render_eval = app.add_subcommand("render-eval", "render evaluation instances");
    render_eval->add_option("--task", eval_task, "task id (BoolQ, RTE, COPA, CB, MultiRC, or one from --templates)")
        ->required();
    render_eval->add_option("--records", records_path, "JSONL eval records")->required();
    render_eval->add_option("--shots", shots, "demonstrations per instance")->required();
    render_eval->add_option("--demos", demos_path, "JSONL demonstration pool (default: the records file)");
    render_eval->add_option("--templates", templates_path, "extra template definitions (JSON)");
    render_eval->add_option("--out", eval_out, "output path (default: stdout)");
    render_eval->add_option("--seed", eval_seed, "demonstration sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (generate->parsed()) return run_generate(config_path, seed_flag, workers_flag);
        if (stats->parsed()) return run_stats(stats_paths);
        if (validate->parsed()) return run_validate(validate_paths);
        if (render_eval->parsed())
            return run_render_eval(eval_task, records_path, shots, demos_path, templates_path,
                                   eval_out, eval_seed);
    } catch (const selfsup::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitConfig;
}
