#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trisa/assembler.hpp"
#include "trisa/attacks.hpp"
#include "trisa/config.hpp"
#include "trisa/imagefile.hpp"
#include "trisa/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAsm = 3;
constexpr int kExitTrap = 4;
constexpr int kExitInternal = 5;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << data;
}

// --config beats the TRISA_CONFIG environment variable; otherwise
// defaults apply.
trisa::SimConfig load_config(const std::string& config_path) {
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("TRISA_CONFIG")) path = env;
  }
  if (path.empty()) return trisa::SimConfig{};
  return trisa::config_from_string(read_file(path));
}

trisa::Mitigations parse_mitigations(const std::string& list) {
  trisa::Mitigations m;
  if (list.empty() || list == "none") return m;
  if (list == "all") return trisa::all_mitigations();
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    if (!trisa::set_mitigation(m, name, true))
      throw trisa::ConfigError("unknown mitigation '" + name + "'");
  }
  return m;
}

std::string trace_csv(const trisa::CacheHierarchy& cache) {
  std::ostringstream out;
  out << "cycle,addr,kind,level,latency,transient,filled\n";
  for (const trisa::TraceEntry& t : cache.trace) {
    out << t.cycle << ",0x" << std::hex << t.addr << std::dec << ","
        << trisa::mem_kind_name(t.kind) << "," << trisa::hit_level_name(t.level)
        << "," << t.latency << "," << (t.transient ? 1 : 0) << ","
        << (t.filled ? 1 : 0) << "\n";
  }
  return out.str();
}

int cmd_asm(const std::string& input, const std::string& output,
            const std::string& symbols_path, bool barriers) {
  trisa::AsmOptions opt;
  opt.speculation_barriers = barriers;
  trisa::AsmResult r = trisa::assemble(read_file(input), opt);
  if (std::holds_alternative<trisa::AsmError>(r)) {
    const auto& e = std::get<trisa::AsmError>(r);
    std::cerr << input << ":" << e.line << ": error: " << e.message << "\n";
    return kExitAsm;
  }
  const auto& image = std::get<trisa::ProgramImage>(r);
  if (!trisa::write_image_file(output, image)) {
    std::cerr << "cannot write " << output << "\n";
    return kExitInternal;
  }
  if (!symbols_path.empty()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, addr] : image.symbols) j[name] = addr;
    write_file(symbols_path, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_run(const std::string& image_path, const std::string& config_path,
            const std::string& trace_path, std::uint64_t max_steps) {
  trisa::SimConfig cfg = load_config(config_path);
  auto image = trisa::read_image_file(image_path);
  if (!image) {
    std::cerr << "cannot read image " << image_path << "\n";
    return kExitConfig;
  }
  trisa::Simulator sim(cfg);
  std::string err;
  if (!sim.load(*image, &err)) {
    std::cerr << "load error: " << err << "\n";
    return kExitConfig;
  }
  trisa::RunReport rep = sim.run(max_steps);
  if (!trace_path.empty()) write_file(trace_path, trace_csv(sim.cache()));

  nlohmann::json j;
  j["cycles"] = rep.cycles;
  j["instructions"] = rep.instructions;
  j["limit_exceeded"] = rep.limit_exceeded;
  j["halted"] = rep.final_state == trisa::StepKind::Halted;
  nlohmann::json regs = nlohmann::json::array();
  for (unsigned i = 0; i < 32; ++i) regs.push_back(sim.state().reg(i));
  j["registers"] = regs;
  if (rep.trap) {
    j["trap"] = {{"cause", trisa::trap_cause_name(rep.trap->cause)},
                 {"pc", rep.trap->faulting_pc}};
    if (rep.trap->faulting_address)
      j["trap"]["address"] = *rep.trap->faulting_address;
  }
  std::cout << j.dump(2) << "\n";
  return rep.final_state == trisa::StepKind::Trapped ? kExitTrap : kExitOk;
}

int cmd_attack(const std::string& which, const trisa::AttackConfig& cfg,
               const std::string& json_path, const std::string& csv_path) {
  trisa::AttackReport rep;
  if (which == "flush-reload") {
    rep = trisa::run_flush_reload(cfg);
  } else if (which == "spectre") {
    rep = trisa::run_spectre_v1(cfg);
  } else if (which == "meltdown") {
    trisa::AttackConfig mc = cfg;
    mc.secret_zone = trisa::Zone::Kernel;
    rep = trisa::run_meltdown(mc);
  } else {
    std::cerr << "unknown attack '" << which << "'\n";
    return kExitConfig;
  }
  nlohmann::json j = trisa::report_to_json(rep);
  if (!json_path.empty()) write_file(json_path, j.dump(2) + "\n");
  if (!csv_path.empty()) write_file(csv_path, trisa::probe_latencies_csv(rep));
  std::cout << j.dump(2) << "\n";
  return kExitOk;  // a Blocked verdict is data, not failure
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRISA platform simulator"};
  app.require_subcommand(1);

  // asm
  auto* asm_cmd = app.add_subcommand("asm", "Assemble a .trs program");
  std::string asm_in, asm_out, asm_syms;
  bool asm_barriers = false;
  asm_cmd->add_option("input", asm_in, "input .trs source")->required();
  asm_cmd->add_option("-o,--output", asm_out, "output image")->required();
  asm_cmd->add_option("--symbols", asm_syms, "write symbol table JSON");
  asm_cmd->add_flag("--barriers", asm_barriers,
                    "insert fence.spec after conditional branches");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run an assembled image");
  std::string run_img, run_cfg, run_trace;
  std::uint64_t run_max = 10'000'000;
  run_cmd->add_option("image", run_img, "image file")->required();
  run_cmd->add_option("--config", run_cfg, "config JSON");
  run_cmd->add_option("--trace", run_trace, "write cache trace CSV");
  run_cmd->add_option("--max-steps", run_max, "instruction limit");

  // attack
  auto* atk_cmd = app.add_subcommand("attack", "Run an attack harness");
  std::string atk_which, atk_secret = "TRISA", atk_mit, atk_json, atk_csv;
  unsigned atk_trials = 1;
  std::uint64_t atk_seed = 1;
  bool atk_tpm = false;
  atk_cmd->add_option("name", atk_which, "flush-reload|spectre|meltdown")
      ->required();
  atk_cmd->add_option("--secret", atk_secret, "secret byte string");
  atk_cmd->add_option("--mitigations", atk_mit,
                      "comma list, or 'all'/'none'");
  atk_cmd->add_option("--json", atk_json, "write report JSON");
  atk_cmd->add_option("--latency-csv", atk_csv, "write probe latency CSV");
  atk_cmd->add_option("--trials", atk_trials, "trials per byte");
  atk_cmd->add_option("--seed", atk_seed, "harness seed");
  atk_cmd->add_flag("--tpm-staging", atk_tpm,
                    "meltdown: target the kernel TPM staging buffer");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Benchmarks");
  std::string bench_which;
  std::size_t bench_bytes = 128;
  std::uint64_t bench_seed = 1;
  std::string bench_mit;
  bench_cmd->add_option("name", bench_which, "covert-channel")->required();
  bench_cmd->add_option("--bytes", bench_bytes, "message length");
  bench_cmd->add_option("--seed", bench_seed, "message seed");
  bench_cmd->add_option("--mitigations", bench_mit,
                        "comma list, or 'all'/'none'");

  // matrix
  auto* mat_cmd = app.add_subcommand("matrix", "Mitigation matrix");
  std::string mat_json;
  unsigned mat_trials = 1;
  std::uint64_t mat_seed = 1;
  mat_cmd->add_option("--json", mat_json, "write matrix JSON");
  mat_cmd->add_option("--trials", mat_trials, "trials per byte");
  mat_cmd->add_option("--seed", mat_seed, "harness seed");

  // config
  auto* cfg_cmd = app.add_subcommand("config", "Configuration helpers");
  bool cfg_print = false;
  cfg_cmd->add_flag("--print-defaults", cfg_print, "print default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (asm_cmd->parsed())
      return cmd_asm(asm_in, asm_out, asm_syms, asm_barriers);
    if (run_cmd->parsed()) return cmd_run(run_img, run_cfg, run_trace, run_max);
    if (atk_cmd->parsed()) {
      trisa::AttackConfig cfg;
      cfg.secret = atk_secret;
      cfg.trials = atk_trials;
      cfg.seed = atk_seed;
      cfg.mitigations = parse_mitigations(atk_mit);
      cfg.tpm_staging = atk_tpm;
      return cmd_attack(atk_which, cfg, atk_json, atk_csv);
    }
    if (bench_cmd->parsed()) {
      if (bench_which != "covert-channel") {
        std::cerr << "unknown bench '" << bench_which << "'\n";
        return kExitConfig;
      }
      trisa::AttackConfig cfg;
      cfg.seed = bench_seed;
      cfg.mitigations = parse_mitigations(bench_mit);
      trisa::CovertChannelReport rep =
          trisa::covert_channel_bench(cfg, bench_bytes);
      std::cout << trisa::covert_report_to_json(rep).dump(2) << "\n";
      return kExitOk;
    }
    if (mat_cmd->parsed()) {
      auto rows = trisa::mitigation_matrix(mat_trials, mat_seed);
      if (!mat_json.empty())
        write_file(mat_json, trisa::matrix_to_json(rows).dump(2) + "\n");
      std::cout << trisa::matrix_to_text(rows);
      return kExitOk;
    }
    if (cfg_cmd->parsed()) {
      if (cfg_print)
        std::cout << trisa::config_to_json(trisa::SimConfig{}).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const trisa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const trisa::HarnessError& e) {
    std::cerr << "harness error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
