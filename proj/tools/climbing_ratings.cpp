#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "climbing/commands.hpp"

namespace {

using namespace climbing;

void add_hyper_flags(CLI::App* cmd, Hyperparameters& hyper) {
    cmd->add_option("--sigma-c-sq", hyper.sigma_c_sq, "Initial climber rating variance")->capture_default_str();
    cmd->add_option("--sigma-r-sq", hyper.sigma_r_sq, "Route rating variance")->capture_default_str();
    cmd->add_option("--w-sq", hyper.w_sq, "Climber rating variance per week")->capture_default_str();
    cmd->add_option("--g0", hyper.g0, "Reference Ewbank grade")->capture_default_str();
    cmd->add_option("--b", hyper.b, "Rating units per Ewbank grade in the route prior mean")->capture_default_str();
}

void add_fit_flags(CLI::App* cmd, FitOptions& options) {
    cmd->add_option("--max-iterations", options.max_iterations, "Maximum outer iterations")->capture_default_str();
    cmd->add_option("--tolerance", options.tolerance,
                    "Converged when the log-likelihood moved at most this much over the window")
        ->capture_default_str();
    cmd->add_option("--window", options.convergence_window, "Convergence window in iterations")
        ->capture_default_str();
    cmd->add_option("--threads", options.threads, "Worker threads (output is identical for any count)")
        ->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Estimate climber and route ratings from ascent logs"};
    app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
    app.require_subcommand(1);

    commands::PreprocessArgs pre;
    std::string tick_mapping;
    auto* pre_cmd = app.add_subcommand("preprocess", "Clean a raw ascent log into a dataset directory");
    pre_cmd->add_option("--input", pre.input, "Raw ascent CSV")->required()->check(CLI::ExistingFile);
    pre_cmd->add_option("--tick-mapping", tick_mapping, "File of 'tick_string,class' lines replacing the defaults");
    pre_cmd->add_option("--out", pre.out_dir, "Output dataset directory")->required();

    commands::FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit ratings to a dataset directory");
    fit_cmd->add_option("--data", fit_args.dataset_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    fit_cmd->add_option("--out", fit_args.out_dir, "Output directory for ratings")->required();
    add_hyper_flags(fit_cmd, fit_args.hyper);
    add_fit_flags(fit_cmd, fit_args.options);

    commands::PredictArgs predict_args;
    predict_args.output = "-";
    auto* predict_cmd = app.add_subcommand("predict", "Success probabilities for (climber_id, route_id, week) queries");
    predict_cmd->add_option("--ratings", predict_args.ratings_dir, "Directory written by 'fit'")
        ->required()
        ->check(CLI::ExistingDirectory);
    predict_cmd->add_option("--queries", predict_args.queries, "Query CSV")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--out", predict_args.output, "Output CSV, '-' for stdout")->capture_default_str();
    add_hyper_flags(predict_cmd, predict_args.hyper);

    commands::EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Fit and score the training ascents");
    eval_cmd->add_option("--data", eval_args.dataset_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--out", eval_args.out_dir, "Output directory for reports")->required();
    add_hyper_flags(eval_cmd, eval_args.hyper);
    add_fit_flags(eval_cmd, eval_args.options);

    commands::CrossvalArgs cv_args;
    auto* cv_cmd = app.add_subcommand("crossval", "Stratified repeated k-fold cross-validation");
    cv_cmd->add_option("--data", cv_args.dataset_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    cv_cmd->add_option("--out", cv_args.out_dir, "Output directory for reports")->required();
    cv_cmd->add_option("--k", cv_args.k, "Number of folds")->capture_default_str();
    cv_cmd->add_option("--repeats", cv_args.repeats, "Number of repeats")->capture_default_str();
    cv_cmd->add_option("--seed", cv_args.seed, "Fold assignment seed")->capture_default_str();
    add_hyper_flags(cv_cmd, cv_args.hyper);
    add_fit_flags(cv_cmd, cv_args.options);

    commands::SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic world and ascent log");
    synth_cmd->add_option("--out", synth_args.out_dir, "Output directory")->required();
    synth_cmd->add_option("--climbers", synth_args.world.n_climbers, "Number of climbers")->capture_default_str();
    synth_cmd->add_option("--routes", synth_args.world.n_routes, "Number of routes")->capture_default_str();
    synth_cmd->add_option("--periods", synth_args.world.n_periods, "Active periods per climber")->capture_default_str();
    synth_cmd->add_option("--weeks-between-periods", synth_args.world.weeks_between_periods, "Spacing of periods")
        ->capture_default_str();
    synth_cmd->add_option("--first-week", synth_args.world.first_week, "Week index of the first period")
        ->capture_default_str();
    synth_cmd->add_option("--grade-min", synth_args.world.grade_min, "Lowest route grade")->capture_default_str();
    synth_cmd->add_option("--grade-max", synth_args.world.grade_max, "Highest route grade")->capture_default_str();
    synth_cmd->add_option("--ascents-per-period", synth_args.ascents_per_climber_period,
                          "Ascents per climber per period")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
    add_hyper_flags(synth_cmd, synth_args.hyper);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : commands::kInputError;
    }

    if (*pre_cmd) {
        if (!tick_mapping.empty()) pre.tick_mapping = tick_mapping;
        return commands::run_preprocess(pre);
    }
    if (*fit_cmd) return commands::run_fit(fit_args);
    if (*predict_cmd) return commands::run_predict(predict_args);
    if (*eval_cmd) return commands::run_evaluate(eval_args);
    if (*cv_cmd) return commands::run_crossval(cv_args);
    if (*synth_cmd) return commands::run_synth(synth_args);
    return commands::kInputError;
}
