#include <doctest.h>

#include <atomic>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sat/checkpoint.hpp"
#include "sat/cli.hpp"
#include "test_support.hpp"

using namespace sat;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args, const std::string& stdin_bytes = {}, const std::atomic<bool>* stop = nullptr) {
    args.insert(args.begin(), "sat");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::istringstream in(stdin_bytes);
    std::ostringstream out;
    std::ostringstream err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), in, out, err, stop);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<json> lines(const std::string& text) {
    std::vector<json> v;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) v.push_back(json::parse(line));
    return v;
}

std::string raw_bytes(const AudioBuffer& a) {
    return {reinterpret_cast<const char*>(a.samples.data()), a.samples.size() * sizeof(float)};
}

struct Fixture {
    std::filesystem::path dir = test::scratch_dir("cli");
    std::string wav = (dir / "clip.wav").string();
    Fixture() { save_wav(wav, test::synth_audio(10.0, 71)); }
};

} // namespace

TEST_CASE_FIXTURE(Fixture, "tag at 2 s delay: five chunks and a summary") {
    const auto r = run_cli({"tag", "--arch", "tiny", "--seed", "1", "--input", wav, "--topk", "3"});
    REQUIRE(r.code == cli::kExitOk);
    const auto recs = lines(r.out);
    REQUIRE(recs.size() == 6);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(recs[k]["schema"] == "sat.tag/1");
        CHECK(recs[k]["type"] == "chunk");
        CHECK(recs[k]["chunk"] == k);
        CHECK(recs[k]["tokens"] == 48);
        CHECK(recs[k]["end_s"].get<double>() - recs[k]["start_s"].get<double>() == doctest::Approx(2.0));
        const auto& top = recs[k]["top"];
        REQUIRE(top.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            const double p = top[i]["p"];
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            if (i > 0) CHECK(p <= top[i - 1]["p"].get<double>());
        }
    }
    CHECK(recs[5]["type"] == "summary");
    CHECK(recs[5]["chunks"] == 5);
    CHECK(r.err.empty());
}

TEST_CASE_FIXTURE(Fixture, "tag in full-context mode gives one record of 256 tokens") {
    const auto r = run_cli({"tag", "--arch", "tiny", "--seed", "1", "--input", wav, "--delay", "full"});
    REQUIRE(r.code == cli::kExitOk);
    const auto recs = lines(r.out);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0]["tokens"] == 256);
}

TEST_CASE_FIXTURE(Fixture, "tag is deterministic and honours labels and csv") {
    std::ofstream(dir / "names.csv") << "index,mid,display_name\n";
    {
        std::ofstream names(dir / "names.csv", std::ios::app);
        for (int i = 0; i < 527; ++i) names << i << ",/m/x" << i << ",Name " << i << "\n";
    }
    const std::vector<std::string> args = {"tag", "--arch", "tiny", "--seed", "5", "--input", wav,
                                           "--labels", (dir / "names.csv").string()};
    const auto a = run_cli(args);
    const auto b = run_cli(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto recs = lines(a.out);
    const int id = recs[0]["top"][0]["id"];
    CHECK(recs[0]["top"][0]["name"] == "Name " + std::to_string(id));

    auto csv_args = args;
    csv_args.insert(csv_args.end(), {"--format", "csv"});
    const auto c = run_cli(csv_args);
    REQUIRE(c.code == 0);
    CHECK(c.out.rfind("schema,stream,type,chunk,start_s,end_s,tokens,rank,class_id,class_name,probability\n", 0) == 0);
    CHECK(std::count(c.out.begin(), c.out.end(), '\n') == 1 + 6 * 5);
}

TEST_CASE_FIXTURE(Fixture, "exit codes") {
    CHECK(run_cli({}).code == cli::kExitBadArgs);
    CHECK(run_cli({"--help"}).code == cli::kExitOk);
    CHECK(run_cli({"tag", "--help"}).code == cli::kExitOk);
    CHECK(run_cli({"tag", "--arch", "tiny", "--seed", "1"}).code == cli::kExitBadArgs);
    CHECK(run_cli({"tag", "--arch", "huge", "--seed", "1", "--input", wav}).code == cli::kExitBadArgs);
    CHECK(run_cli({"tag", "--arch", "tiny", "--seed", "1", "--input", wav, "--delay", "0"}).code == cli::kExitBadArgs);
    CHECK(run_cli({"tag", "--arch", "tiny", "--seed", "1", "--input", wav, "--delay", "abc"}).code == cli::kExitBadArgs);
    CHECK(run_cli({"tag", "--arch", "tiny", "--input", wav}).code == cli::kExitBadArgs);

    const auto missing = run_cli({"tag", "--arch", "tiny", "--weights", (dir / "nope.satw").string(), "--input", wav});
    CHECK(missing.code == cli::kExitWeights);
    CHECK(missing.err.find("nope.satw") != std::string::npos);
    CHECK(missing.out.empty());

    save_weights(seeded_init(ModelConfig::small(), 1), dir / "small.satw");
    CHECK(run_cli({"tag", "--arch", "tiny", "--weights", (dir / "small.satw").string(), "--input", wav}).code ==
          cli::kExitWeights);
    CHECK(run_cli({"tag", "--arch", "small", "--weights", (dir / "small.satw").string(), "--input", wav}).code ==
          cli::kExitOk);

    const auto no_audio = run_cli({"tag", "--arch", "tiny", "--seed", "1", "--input", (dir / "none.wav").string()});
    CHECK(no_audio.code == cli::kExitAudio);
    const auto stereo = dir / "stereo.wav";
    const auto bytes = encode_wav(test::synth_audio(3.0, 1), WavEncoding::Pcm16, 2);
    std::ofstream(stereo, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    const auto st = run_cli({"tag", "--arch", "tiny", "--seed", "1", "--input", stereo.string()});
    CHECK(st.code == cli::kExitAudio);
    CHECK(st.err.find("channel") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "stream from a file matches tag") {
    const auto t = lines(run_cli({"tag", "--arch", "tiny", "--seed", "2", "--input", wav}).out);
    const auto s = run_cli({"stream", "--arch", "tiny", "--seed", "2", "--input", wav});
    REQUIRE(s.code == 0);
    const auto recs = lines(s.out);
    REQUIRE(recs.size() == t.size());
    for (std::size_t k = 0; k < 5; ++k) CHECK(recs[k]["top"] == t[k]["top"]);
}

TEST_CASE("stream without cache changes only probabilities") {
    const std::string raw = raw_bytes(test::synth_audio(8.0, 72));
    const auto a = lines(run_cli({"stream", "--arch", "tiny", "--seed", "3", "--stdin-raw-f32"}, raw).out);
    const auto b = lines(run_cli({"stream", "--arch", "tiny", "--seed", "3", "--stdin-raw-f32", "--no-cache"}, raw).out);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (const char* key : {"chunk", "start_s", "end_s", "tokens", "type", "stream"}) CHECK(a[k][key] == b[k][key]);
    }
    CHECK(a[0]["top"] == b[0]["top"]);
    CHECK(a[2]["top"] != b[2]["top"]);
}

TEST_CASE("a ten minute stream gives 300 records") {
    const std::string raw = raw_bytes(test::synth_audio(600.0, 73));
    const auto r = run_cli({"stream", "--arch", "tiny", "--seed", "4", "--stdin-raw-f32", "--topk", "1"}, raw);
    REQUIRE(r.code == 0);
    const auto recs = lines(r.out);
    REQUIRE(recs.size() == 301);
    double prev = -1.0;
    for (std::size_t k = 0; k < 300; ++k) {
        CHECK(recs[k]["start_s"].get<double>() > prev);
        prev = recs[k]["start_s"];
    }
    CHECK(recs[300]["type"] == "summary");
    CHECK(recs[300]["chunks"] == 300);
}

TEST_CASE("interrupted stream ends with a summary and exit 0") {
    std::atomic<bool> stop{true};
    const auto r = run_cli({"stream", "--arch", "tiny", "--seed", "4", "--stdin-raw-f32"}, raw_bytes(test::synth_audio(4.0, 74)), &stop);
    CHECK(r.code == 0);
    const auto recs = lines(r.out);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0]["type"] == "summary");
    CHECK(recs[0]["interrupted"] == true);
}

TEST_CASE("stream argument checks") {
    CHECK(run_cli({"stream", "--arch", "tiny", "--seed", "1"}).code == cli::kExitBadArgs);
    CHECK(run_cli({"stream", "--arch", "tiny", "--seed", "1", "--stdin-raw-f32"}, "").code == cli::kExitAudio);
}

TEST_CASE("eval over a synthetic manifest") {
    const auto dir = test::scratch_dir("eval");
    {
        std::ofstream manifest(dir / "manifest.tsv");
        std::ofstream strong(dir / "strong.tsv");
        for (int i = 0; i < 10; ++i) {
            const std::string name = "clip" + std::to_string(i);
            save_wav(dir / (name + ".wav"), test::synth_audio(4.0 + i % 3, 80 + i, 200.0 + 150.0 * i));
            manifest << name << '\t' << name << ".wav\t" << (i % 4) << "," << (10 + i) << '\n';
            strong << name << '\t' << 0.5 << '\t' << 2.5 << '\t' << (i % 4) << '\n';
        }
    }
    const std::vector<std::string> args = {"eval", "--arch", "tiny", "--seed", "9", "--manifest", (dir / "manifest.tsv").string(),
                                           "--strong-labels", (dir / "strong.tsv").string()};
    const auto a = run_cli(args);
    const auto b = run_cli(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto j = json::parse(a.out);
    CHECK(j["schema"] == "sat.eval/1");
    CHECK(j["n_clips"] == 10);
    CHECK(j["n_failed"] == 0);
    CHECK(j["mAP"].get<double>() >= 0.0);
    CHECK(j["mAP"].get<double>() <= 1.0);
    CHECK(j.contains("seg_f1"));
    CHECK(j.contains("onset_f1"));

    // Two unreadable clips out of eleven is more than 10% failed.
    {
        std::ofstream manifest(dir / "manifest.tsv", std::ios::app);
        manifest << "gone\tgone.wav\t1\n";
    }
    const auto one_bad = run_cli({"eval", "--arch", "tiny", "--seed", "9", "--manifest", (dir / "manifest.tsv").string()});
    CHECK(one_bad.code == 0);
    CHECK(json::parse(one_bad.out)["n_failed"] == 1);
    CHECK(one_bad.err.find("gone") != std::string::npos);
    {
        std::ofstream manifest(dir / "manifest.tsv", std::ios::app);
        manifest << "gone2\tgone2.wav\t1\n";
    }
    CHECK(run_cli({"eval", "--arch", "tiny", "--seed", "9", "--manifest", (dir / "manifest.tsv").string()}).code ==
          cli::kExitFailure);
}

TEST_CASE("profile") {
    auto r = run_cli({"profile", "--arch", "tiny", "--tokens", "256"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["gflops"].get<double>() == doctest::Approx(2.7).epsilon(0.15));
    r = run_cli({"profile", "--arch", "base", "--delay", "2", "--streaming"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["tokens"] == "48/48");
    r = run_cli({"profile", "--arch", "tiny", "--tokens", "1"});
    CHECK(r.code == 0);
    CHECK(json::parse(r.out)["n_tokens"] == 1);
    CHECK(run_cli({"profile", "--arch", "tiny", "--delay", "full"}).out.find("\"256\"") != std::string::npos);
    CHECK(run_cli({"profile", "--arch", "tiny", "--tokens", "4", "--delay", "2"}).code == cli::kExitBadArgs);
    CHECK(run_cli({"profile", "--arch", "huge", "--tokens", "4"}).code == cli::kExitBadArgs);
    CHECK(run_cli({"profile", "--arch", "tiny", "--tokens", "48", "--format", "table"}).out.find("| Model |") == 0);
}
