#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "seqcls/checkpoint.hpp"

using namespace seqcls;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("seqcls-ckpt-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig sample_config(Arch arch) {
    ModelConfig mc;
    mc.seq_len = 12;
    mc.n_vars = 5;
    mc.d_model = 8;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.pooling = Pooling::Last;
    mc.positional_encoding = (arch == Arch::Transformer);
    mc.kernel_width = 5;
    return mc;
}

} // namespace

TEST_CASE("checkpoint round trip preserves config, order, and bits") {
    TempDir tmp;
    for (Arch arch : {Arch::Transformer, Arch::Rnn, Arch::Cnn}) {
        Model original = make_model(arch, sample_config(arch), 97);
        const std::string path = (tmp.path / (arch_name(arch) + std::string(".seqv1"))).string();
        save_checkpoint(path, original);
        Model loaded = load_checkpoint(path);

        REQUIRE(loaded.arch == original.arch);
        REQUIRE(loaded.config.seq_len == original.config.seq_len);
        REQUIRE(loaded.config.n_vars == original.config.n_vars);
        REQUIRE(loaded.config.d_model == original.config.d_model);
        REQUIRE(loaded.config.n_layers == original.config.n_layers);
        REQUIRE(loaded.config.n_heads == original.config.n_heads);
        REQUIRE(loaded.config.resolved_ffn_dim() == original.config.resolved_ffn_dim());
        REQUIRE(loaded.config.pooling == original.config.pooling);
        REQUIRE(loaded.config.positional_encoding == original.config.positional_encoding);
        REQUIRE(loaded.config.kernel_width == original.config.kernel_width);

        REQUIRE(loaded.params.size() == original.params.size());
        for (std::size_t p = 0; p < original.params.size(); ++p) {
            REQUIRE(loaded.params.name(p) == original.params.name(p));
            const Tensor& a = original.params.node(p).value;
            const Tensor& b = loaded.params.node(p).value;
            REQUIRE(a.rows() == b.rows());
            REQUIRE(a.cols() == b.cols());
            for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
        }

        // Inference through the reloaded model is bit-identical.
        Rng rng(5);
        Tensor x(original.config.seq_len, original.config.n_vars);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
        const ClassProbabilities pa = classify(original, x);
        const ClassProbabilities pb = classify(loaded, x);
        REQUIRE(pa.p_core_damage == pb.p_core_damage);
        REQUIRE(pa.p_ok == pb.p_ok);
    }
}

TEST_CASE("checkpoint save then save again is byte identical") {
    TempDir tmp;
    Model m = make_model(Arch::Transformer, sample_config(Arch::Transformer), 11);
    const std::string p1 = (tmp.path / "a.seqv1").string();
    const std::string p2 = (tmp.path / "b.seqv1").string();
    save_checkpoint(p1, m);
    save_checkpoint(p2, m);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(!s1.empty());
    REQUIRE(s1 == s2);
    REQUIRE(s1.rfind(kCheckpointMagic, 0) == 0);
}

TEST_CASE("corrupted checkpoints are rejected") {
    TempDir tmp;
    Model m = make_model(Arch::Cnn, sample_config(Arch::Cnn), 13);
    const std::string good = (tmp.path / "good.seqv1").string();
    save_checkpoint(good, m);

    const auto write_file = [&](const std::string& name, const std::string& content) {
        const std::string p = (tmp.path / name).string();
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p;
    };
    std::ifstream in(good, std::ios::binary);
    const std::string full((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    SECTION("bad magic") {
        std::string bad = full;
        bad[0] = 'X';
        REQUIRE_THROWS_AS(load_checkpoint(write_file("magic.seqv1", bad)), ParseError);
    }
    SECTION("truncated file") {
        REQUIRE_THROWS_AS(load_checkpoint(write_file("trunc.seqv1", full.substr(0, full.size() / 2))),
                          ParseError);
    }
    SECTION("unknown header field") {
        std::string bad = full;
        const std::size_t pos = bad.find("arch ");
        bad.insert(pos, "mystery 42\n");
        REQUIRE_THROWS_AS(load_checkpoint(write_file("field.seqv1", bad)), ParseError);
    }
    SECTION("trailing garbage") {
        REQUIRE_THROWS_AS(load_checkpoint(write_file("trail.seqv1", full + "extra\n")), ParseError);
    }
    SECTION("missing file") {
        REQUIRE_THROWS_AS(load_checkpoint((tmp.path / "nope.seqv1").string()), ParseError);
    }
}
