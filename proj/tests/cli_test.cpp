#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

const std::string kCli = TRISA_CLI_PATH;

std::string tmp_path(const std::string& name) {
  return testing::TempDir() + "trisa_cli_" + name;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

int run(const std::string& args, const std::string& stdout_path = "") {
  std::string cmd = kCli + " " + args;
  if (!stdout_path.empty()) cmd += " > " + stdout_path;
  cmd += " 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return nlohmann::json::parse(s.str());
}

const char* kProgram =
    ".zone dmz\n"
    ".org 0x100000\n"
    "_start:\n"
    "    addi x1, zero, 5\n"
    "    addi x2, x1, 7\n"
    "    mul x3, x1, x2\n"
    "    ebreak\n";

}  // namespace

TEST(Cli, AssembleAndRun) {
  const std::string src = tmp_path("ok.trs");
  const std::string img = tmp_path("ok.img");
  const std::string out = tmp_path("ok.json");
  write_file(src, kProgram);
  ASSERT_EQ(run("asm " + src + " -o " + img), 0);
  ASSERT_EQ(run("run " + img, out), 0);
  nlohmann::json j = read_json(out);
  EXPECT_TRUE(j.at("halted").get<bool>());
  EXPECT_EQ(j.at("registers")[1].get<std::uint64_t>(), 5u);
  EXPECT_EQ(j.at("registers")[3].get<std::uint64_t>(), 60u);
  EXPECT_GT(j.at("cycles").get<std::uint64_t>(), 0u);
}

TEST(Cli, SymbolTableOutput) {
  const std::string src = tmp_path("sym.trs");
  const std::string img = tmp_path("sym.img");
  const std::string syms = tmp_path("sym.json");
  write_file(src, kProgram);
  ASSERT_EQ(run("asm " + src + " -o " + img + " --symbols " + syms), 0);
  nlohmann::json j = read_json(syms);
  EXPECT_EQ(j.at("_start").get<std::uint64_t>(), 0x100000u);
}

TEST(Cli, AssemblyErrorsExitThree) {
  const std::string src = tmp_path("bad.trs");
  write_file(src, ".zone dmz\n.org 0\n    frobnicate x1\n");
  EXPECT_EQ(run("asm " + src + " -o " + tmp_path("bad.img")), 3);
}

TEST(Cli, TrapsExitFour) {
  const std::string src = tmp_path("trap.trs");
  const std::string img = tmp_path("trap.img");
  const std::string out = tmp_path("trap.json");
  write_file(src, ".zone dmz\n.org 0x100000\n_start:\n    ecall\n");
  ASSERT_EQ(run("asm " + src + " -o " + img), 0);
  EXPECT_EQ(run("run " + img, out), 4);
  EXPECT_EQ(read_json(out).at("trap").at("cause").get<std::string>(),
            "EnvCall");
}

TEST(Cli, BadConfigExitsTwo) {
  const std::string src = tmp_path("cfg.trs");
  const std::string img = tmp_path("cfg.img");
  const std::string cfg = tmp_path("cfg.json");
  write_file(src, kProgram);
  ASSERT_EQ(run("asm " + src + " -o " + img), 0);
  write_file(cfg, R"({"sede": 1})");
  EXPECT_EQ(run("run " + img + " --config " + cfg), 2);
  write_file(cfg, R"({"seed": 1})");
  EXPECT_EQ(run("run " + img + " --config " + cfg), 0);
}

TEST(Cli, ConfigFlagBeatsEnvironment) {
  const std::string src = tmp_path("env.trs");
  const std::string img = tmp_path("env.img");
  const std::string bad = tmp_path("env_bad.json");
  const std::string good = tmp_path("env_good.json");
  write_file(src, kProgram);
  ASSERT_EQ(run("asm " + src + " -o " + img), 0);
  write_file(bad, "not json");
  write_file(good, R"({"seed": 7})");
  ASSERT_EQ(setenv("TRISA_CONFIG", bad.c_str(), 1), 0);
  EXPECT_EQ(run("run " + img), 2);
  EXPECT_EQ(run("run " + img + " --config " + good), 0);
  unsetenv("TRISA_CONFIG");
}

TEST(Cli, AttackSpectreRecoversSecret) {
  const std::string out = tmp_path("spectre.json");
  ASSERT_EQ(run("attack spectre --secret TRISA --json " + out), 0);
  nlohmann::json j = read_json(out);
  EXPECT_EQ(j.at("recovered_text").get<std::string>(), "TRISA");
  EXPECT_EQ(j.at("verdict").get<std::string>(), "Leaked");
}

TEST(Cli, AttackWithMitigationIsBlockedButExitsZero) {
  const std::string out = tmp_path("blocked.json");
  ASSERT_EQ(run("attack spectre --secret AB --mitigations "
                "speculation_barriers",
                out),
            0);
  EXPECT_EQ(read_json(out).at("verdict").get<std::string>(), "Blocked");
}

TEST(Cli, UnknownMitigationExitsTwo) {
  EXPECT_EQ(run("attack spectre --mitigations warp_drive"), 2);
  EXPECT_EQ(run("attack no-such-attack"), 2);
}

TEST(Cli, LatencyCsvHasHeaderAndRows) {
  const std::string csv = tmp_path("lat.csv");
  ASSERT_EQ(run("attack meltdown --secret Q --latency-csv " + csv), 0);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "byte_index,probe_index,latency");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 256u);
}

TEST(Cli, MatrixOutputs) {
  const std::string js = tmp_path("matrix.json");
  const std::string txt = tmp_path("matrix.txt");
  ASSERT_EQ(run("matrix --json " + js, txt), 0);
  nlohmann::json j = read_json(js);
  ASSERT_EQ(j.size(), 9u);
  EXPECT_EQ(j[0].at("mitigation_set").get<std::string>(), "baseline");
  std::ifstream in(txt);
  std::ostringstream s;
  s << in.rdbuf();
  EXPECT_NE(s.str().find("flush+reload"), std::string::npos);
  EXPECT_NE(s.str().find("baseline"), std::string::npos);
}

TEST(Cli, BenchCovertChannel) {
  const std::string out = tmp_path("bench.json");
  ASSERT_EQ(run("bench covert-channel --bytes 4", out), 0);
  nlohmann::json j = read_json(out);
  EXPECT_EQ(j.at("bits_sent").get<std::uint64_t>(), 32u);
  EXPECT_EQ(j.at("bits_correct").get<std::uint64_t>(), 32u);
}

TEST(Cli, PrintDefaultsIsValidConfig) {
  const std::string out = tmp_path("defaults.json");
  ASSERT_EQ(run("config --print-defaults", out), 0);
  nlohmann::json j = read_json(out);
  EXPECT_EQ(j.at("cache").at("l1").at("size").get<std::uint64_t>(),
            32u * 1024);
  // The printed defaults round-trip through the parser.
  const std::string img = tmp_path("defaults_prog.img");
  const std::string src = tmp_path("defaults_prog.trs");
  write_file(src, kProgram);
  ASSERT_EQ(run("asm " + src + " -o " + img), 0);
  EXPECT_EQ(run("run " + img + " --config " + out), 0);
}
