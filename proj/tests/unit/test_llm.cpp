#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "stemlab/error.hpp"
#include "stemlab/llm.hpp"
#include "stemlab/stemmers.hpp"
#include "test_support.hpp"

using namespace stemlab;

namespace {

ChatRequest plain(const std::string& text) {
    ChatRequest r;
    r.user_text = text;
    return r;
}

ProviderConfig fast_config(int retries = 3) {
    ProviderConfig c;
    c.max_retries = retries;
    c.backoff_base = std::chrono::milliseconds(1);
    return c;
}

// Fails with the given errors in order, then answers "ok".
class ScriptedProvider : public ChatProvider {
public:
    enum class Fail { Transient, Permanent, Auth, Malformed };
    explicit ScriptedProvider(std::vector<Fail> script) : script_(std::move(script)) {}

    std::string complete_once(const ChatRequest&, const std::string& id) override {
        const auto n = calls.fetch_add(1);
        if (n < script_.size()) {
            switch (script_[n]) {
                case Fail::Transient: throw TransportFailure(id, "503", true);
                case Fail::Permanent: throw TransportFailure(id, "400", false);
                case Fail::Auth: throw AuthError(id, "401");
                case Fail::Malformed: throw MalformedResponseError(id, "bad json");
            }
        }
        return "ok";
    }
    bool contacts_network() const override { return false; }

    std::atomic<std::size_t> calls{0};

private:
    std::vector<Fail> script_;
};

// Records the peak number of concurrent calls.
class SlowProvider : public ChatProvider {
public:
    std::string complete_once(const ChatRequest&, const std::string&) override {
        const int now = ++active;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return "x";
    }
    bool contacts_network() const override { return false; }
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
};

}  // namespace

TEST(Sha256, KnownDigest) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(request_id_for(plain("abc")), "req-ba7816bf8f01");
}

TEST(MockProvider, TableLookup) {
    MockProvider mock;
    mock.add_response("p1", "r1");
    EXPECT_EQ(mock.complete_once(plain("p1"), "id"), "r1");
    EXPECT_EQ(mock.misses(), 0u);
}

TEST(MockProvider, UnknownPromptIsMiss) {
    MockProvider mock;
    EXPECT_EQ(mock.complete_once(plain("never seen"), "id"), "");
    EXPECT_EQ(mock.misses(), 1u);
}

TEST(MockProvider, SaveLoadRoundTripWithEscapes) {
    testsupport::TempDir dir;
    MockProvider mock(MockProvider::RuleMode::Porter);
    mock.add_response("p1", "line one\nline\ttwo \\ end");
    mock.save(dir.file("m.tsv"));
    auto loaded = MockProvider::load(dir.file("m.tsv"));
    EXPECT_EQ(loaded->mode(), MockProvider::RuleMode::Porter);
    EXPECT_EQ(loaded->complete_once(plain("p1"), "id"), "line one\nline\ttwo \\ end");
}

TEST(MockProvider, BadTableLineNumbered) {
    testsupport::TempDir dir;
    testsupport::write_file(dir.file("m.tsv"), "# c\n@mode\tidentity\nnot-a-digest\tx\n");
    try {
        MockProvider::load(dir.file("m.tsv"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(MockProvider, RuleModesAnswerEachPromptKind) {
    const auto s = OneShotSamples::defaults();
    MockProvider porter(MockProvider::RuleMode::Porter);
    const std::vector<std::string> terms = {"running", "ponies"};
    EXPECT_EQ(porter.complete_once(build_vs_prompt(terms, s), "id"), "running:run\nponies:poni");
    EXPECT_EQ(porter.complete_once(build_cs_prompt("Cats were running.", s), "id"), "cat were run");

    MockProvider identity(MockProvider::RuleMode::Identity);
    EXPECT_EQ(identity.complete_once(build_vs_prompt(terms, s), "id"), "running:running\nponies:ponies");
    EXPECT_EQ(identity.complete_once(build_cs_prompt("Cats were running.", s), "id"), "Cats were running.");
    EXPECT_EQ(identity.complete_once(build_ecs_prompt("They met Marie Curie in Paris.", s), "id"),
              "Marie Curie\nParis");
}

TEST(Prompts, VsTemplate) {
    const auto s = OneShotSamples::defaults();
    const std::vector<std::string> terms = {"running", "ponies"};
    const auto req = build_vs_prompt(terms, s);
    EXPECT_NE(req.user_text.find("Can you provide the stemmed version of these terms? running ponies"),
              std::string::npos);
    EXPECT_TRUE(build_vs_prompt(std::vector<std::string>{"a"}, s).user_text.ends_with("Stemmer:"));
    EXPECT_THROW(build_vs_prompt(std::vector<std::string>{}, s), InvalidArgument);
    EXPECT_EQ(req.max_output_tokens, kVsMaxOutputTokens);
}

TEST(Prompts, CsTemplate) {
    const auto s = OneShotSamples::defaults();
    const std::string p = "The wolves were running across frozen lakes.";
    const auto req = build_cs_prompt(p, s);
    const auto ask = req.user_text.rfind("Can you provide the stemmed version of this paragraph?");
    ASSERT_NE(ask, std::string::npos);
    EXPECT_NE(req.user_text.find(p, ask), std::string::npos);
    EXPECT_NE(req.user_text.find("Programs PTY. LTD. sold for 1 billion euros"), std::string::npos);
    EXPECT_TRUE(req.user_text.ends_with("Stemmed paragraph:"));
    EXPECT_THROW(build_cs_prompt("", s), InvalidArgument);
}

TEST(Prompts, EcsTemplate) {
    const auto s = OneShotSamples::defaults();
    const std::string p = "Ada Lovelace worked in London.";
    const auto req = build_ecs_prompt(p, s);
    const auto ask = req.user_text.rfind("Can you extract all entities from the following paragraph?");
    ASSERT_NE(ask, std::string::npos);
    EXPECT_NE(req.user_text.find(p, ask), std::string::npos);
    EXPECT_TRUE(req.user_text.ends_with("Extracted entities:"));
    EXPECT_THROW(build_ecs_prompt("", s), InvalidArgument);
}

TEST(Prompts, PureAndClassifiable) {
    const auto s = OneShotSamples::defaults();
    const std::vector<std::string> terms = {"alpha", "beta"};
    EXPECT_EQ(build_vs_prompt(terms, s).user_text, build_vs_prompt(terms, s).user_text);

    auto vs = classify_prompt(build_vs_prompt(terms, s).user_text);
    EXPECT_EQ(vs.kind, PromptKind::Vocabulary);
    EXPECT_EQ(vs.payload, "alpha beta");
    auto cs = classify_prompt(build_cs_prompt("Some text.", s).user_text);
    EXPECT_EQ(cs.kind, PromptKind::Contextual);
    EXPECT_EQ(cs.payload, "Some text.");
    auto ecs = classify_prompt(build_ecs_prompt("Some text.", s).user_text);
    EXPECT_EQ(ecs.kind, PromptKind::Entities);
    EXPECT_EQ(classify_prompt("hello").kind, PromptKind::Unknown);
}

TEST(Prompts, DecodeProfiles) {
    EXPECT_EQ(default_decode(DecodeProfile::Remote).temperature, 0.0);
    EXPECT_EQ(default_decode(DecodeProfile::Remote).top_p, 1.0);
    EXPECT_EQ(default_decode(DecodeProfile::Local).temperature, 1e-6);
    EXPECT_EQ(default_decode(DecodeProfile::Local).top_p, 0.9);
    const auto req = build_cs_prompt("x y", OneShotSamples::defaults(), default_decode(DecodeProfile::Local));
    EXPECT_EQ(req.temperature, 1e-6);
    EXPECT_EQ(req.top_p, 0.9);
}

TEST(Samples, LoadFromShippedFile) {
    const auto s = OneShotSamples::load((testsupport::source_dir() / "data" / "oneshot_samples.json").string());
    const auto d = OneShotSamples::defaults();
    EXPECT_EQ(s.terms_sample, d.terms_sample);
    EXPECT_EQ(s.stemmed_sample, d.stemmed_sample);
    EXPECT_EQ(s.paragraph_sample, d.paragraph_sample);
    EXPECT_EQ(s.stemmed_paragraph_sample, d.stemmed_paragraph_sample);
    EXPECT_EQ(s.entities_extracted_sample, d.entities_extracted_sample);
}

TEST(Gateway, RetriesTransientFailures) {
    auto p = std::make_unique<ScriptedProvider>(std::vector{ScriptedProvider::Fail::Transient,
                                                            ScriptedProvider::Fail::Transient});
    auto* raw = p.get();
    LlmGateway gw(fast_config(3), std::move(p));
    EXPECT_EQ(gw.complete(plain("q")), "ok");
    EXPECT_EQ(raw->calls.load(), 3u);
    EXPECT_EQ(gw.stats().retries, 2u);
}

TEST(Gateway, GivesUpAfterMaxRetries) {
    auto p = std::make_unique<ScriptedProvider>(std::vector<ScriptedProvider::Fail>(5, ScriptedProvider::Fail::Transient));
    auto* raw = p.get();
    LlmGateway gw(fast_config(2), std::move(p));
    EXPECT_THROW(gw.complete(plain("q")), TransportError);
    EXPECT_EQ(raw->calls.load(), 3u);
    EXPECT_EQ(gw.stats().failures, 1u);
}

TEST(Gateway, NoRetryOnPermanentAuthOrMalformed) {
    for (auto f : {ScriptedProvider::Fail::Permanent, ScriptedProvider::Fail::Auth, ScriptedProvider::Fail::Malformed}) {
        auto p = std::make_unique<ScriptedProvider>(std::vector{f});
        auto* raw = p.get();
        LlmGateway gw(fast_config(3), std::move(p));
        EXPECT_THROW(gw.complete(plain("q")), ProviderError);
        EXPECT_EQ(raw->calls.load(), 1u);
    }
}

TEST(Gateway, AuthErrorCarriesRequestId) {
    LlmGateway gw(fast_config(), std::make_unique<ScriptedProvider>(std::vector{ScriptedProvider::Fail::Auth}));
    try {
        gw.complete(plain("abc"));
        FAIL();
    } catch (const AuthError& e) {
        EXPECT_EQ(e.request_id(), "req-ba7816bf8f01");
        EXPECT_EQ(e.category(), Error::Category::Provider);
    }
}

TEST(Gateway, ConcurrencyCap) {
    auto cfg = fast_config();
    cfg.max_concurrent_requests = 2;
    auto p = std::make_unique<SlowProvider>();
    auto* raw = p.get();
    LlmGateway gw(cfg, std::move(p));
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { gw.complete(plain("q")); });
    for (auto& t : threads) t.join();
    EXPECT_LE(raw->peak.load(), 2);
    EXPECT_EQ(gw.stats().requests, 8u);
}

TEST(Gateway, RejectsInvalidRequestsAndConfig) {
    LlmGateway gw(fast_config(), std::make_unique<MockProvider>());
    EXPECT_THROW(gw.complete(plain("")), InvalidArgument);
    auto bad = fast_config();
    bad.max_retries = 11;
    EXPECT_THROW(LlmGateway(bad, std::make_unique<MockProvider>()), InvalidArgument);
}

TEST(StemCache, PutGetConflict) {
    StemCache c;
    c.put("wolves", {"wolf"});
    ASSERT_TRUE(c.get("wolves"));
    EXPECT_EQ(*c.get("wolves"), (std::vector<std::string>{"wolf"}));
    EXPECT_FALSE(c.get("unknown"));
    EXPECT_NO_THROW(c.put("wolves", {"wolf"}));
    EXPECT_THROW(c.put("wolves", {"wolv"}), ConflictError);
    EXPECT_THROW(c.put("Wolves", {"wolf"}), InvalidArgument);
    EXPECT_THROW(c.put("x", {}), InvalidArgument);
}

TEST(StemCache, PersistenceRoundTrip) {
    testsupport::TempDir dir;
    const auto path = dir.file("cache.tsv");
    {
        StemCache c(path);
        c.put("wolves", {"wolf", "wolv"});
        c.put("ran", {"run"});
        EXPECT_TRUE(c.dirty());
        c.checkpoint();
        EXPECT_FALSE(c.dirty());
    }
    StemCache again(path);
    EXPECT_EQ(again.size(), 2u);
    EXPECT_EQ(*again.get("wolves"), (std::vector<std::string>{"wolf", "wolv"}));
    EXPECT_EQ(testsupport::read_file(path), "ran\trun\nwolves\twolf wolv\n");
}

TEST(StemCache, ConcurrentPuts) {
    StemCache c;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 500; ++i) {
                const auto w = "w" + std::to_string(i);
                c.put(w, {"s" + std::to_string(i)});
                (void)c.get("w" + std::to_string((i + t) % 500));
            }
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(c.size(), 500u);
}
