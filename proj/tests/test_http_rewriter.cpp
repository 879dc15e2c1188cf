// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <functional>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "forgetlab/asd_engine.hpp"
#include "forgetlab/error.hpp"
#include "forgetlab/http_rewriter.hpp"
#include "forgetlab/rfp.hpp"

using namespace forgetlab;
using namespace forgetlab::rewrite;
using namespace std::chrono_literals;

namespace {

/// Local server whose single POST handler is supplied by the test.
class MockServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit MockServer(Handler handler) {
        server_.Post("/rewrite", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/rewrite"; }
    [[nodiscard]] int hits() const { return hits_.load(); }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
};

void reply(httplib::Response& res, const std::string& body, int status = 200) {
    res.status = status;
    res.set_content(body, "application/json");
}

HttpPolicy fast_policy(int retries = 2) {
    HttpPolicy p;
    p.timeout = 2000ms;
    p.retries = retries;
    p.initial_backoff = 1ms;
    return p;
}

RewriterFailure failure_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const RewriterError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no RewriterError thrown";
    return RewriterFailure::Unavailable;
}

}  // namespace

TEST(HttpWire, RequestEncodingCarriesOnlyTheKindParameter) {
    auto d = RewriteRequest::distractors("What is it?", "cat");
    d.image = "img/3.jpg";
    d.context["task"] = "vqa";
    EXPECT_EQ(encode_request(d),
              R"({"kind":"distractors","count":3,"question":"What is it?","gt_label":"cat","image":"img/3.jpg",)"
              R"("context":{"task":"vqa"}})");
    const auto e = nlohmann::json::parse(encode_request(RewriteRequest::explain("q", "Yes", 50)));
    EXPECT_EQ(e["kind"], "explain");
    EXPECT_EQ(e["target_words"], 50);
    EXPECT_FALSE(e.contains("count"));
    EXPECT_EQ(nlohmann::json::parse(encode_request(RewriteRequest::condense("q", "g")))["max_words"], 10);
    EXPECT_FALSE(nlohmann::json::parse(encode_request(RewriteRequest::incorrect_answer("q", "g"))).contains("count"));
}

TEST(HttpWire, ResponseDecoding) {
    EXPECT_EQ(decode_response(R"({"texts":["a","b"]})").texts, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(failure_of([] { (void)decode_response("nope"); }), RewriterFailure::ContractViolation);
    EXPECT_EQ(failure_of([] { (void)decode_response(R"({"text":["a"]})"); }), RewriterFailure::ContractViolation);
    EXPECT_EQ(failure_of([] { (void)decode_response(R"({"texts":[1]})"); }), RewriterFailure::ContractViolation);
    EXPECT_EQ(failure_of([] { (void)decode_response(R"({"texts":["a"],"extra":1})"); }),
              RewriterFailure::ContractViolation);
}

TEST(HttpRewriter, ParsesFixturePayload) {
    std::string seen_body;
    MockServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        reply(res, R"({"texts":["dog","bird","fish"]})");
    });
    const auto req = RewriteRequest::distractors("What animal?", "cat");
    const auto resp = http_rewrite(server.url(), req, fast_policy());
    EXPECT_EQ(resp.texts, (std::vector<std::string>{"dog", "bird", "fish"}));
    EXPECT_EQ(seen_body, encode_request(req));
    EXPECT_EQ(server.hits(), 1);
}

TEST(HttpRewriter, ShortDistractorListIsContractViolation) {
    MockServer server([](const httplib::Request&, httplib::Response& res) { reply(res, R"({"texts":["a","b"]})"); });
    EXPECT_EQ(failure_of([&] { (void)http_rewrite(server.url(), RewriteRequest::distractors("q", "c"), fast_policy()); }),
              RewriterFailure::ContractViolation);
    EXPECT_EQ(server.hits(), 1);  // contract errors are not retried
}

TEST(HttpRewriter, ServerErrorsRetryThenTimeout) {
    MockServer server([](const httplib::Request&, httplib::Response& res) { reply(res, "{}", 503); });
    EXPECT_EQ(failure_of([&] {
                  (void)http_rewrite(server.url(), RewriteRequest::incorrect_answer("q", "a"), fast_policy(2));
              }),
              RewriterFailure::Timeout);
    EXPECT_EQ(server.hits(), 3);
}

TEST(HttpRewriter, RecoversAfterTransientFailure) {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) reply(res, "{}", 429);
        else reply(res, R"({"texts":["blue"]})");
    });
    EXPECT_EQ(http_rewrite(server.url(), RewriteRequest::incorrect_answer("q", "red"), fast_policy(2)).texts.front(),
              "blue");
    EXPECT_EQ(server.hits(), 3);
}

TEST(HttpRewriter, ClientErrorIsUnavailable) {
    MockServer server([](const httplib::Request&, httplib::Response& res) { reply(res, "{}", 400); });
    EXPECT_EQ(failure_of([&] {
                  (void)http_rewrite(server.url(), RewriteRequest::incorrect_answer("q", "a"), fast_policy());
              }),
              RewriterFailure::Unavailable);
    EXPECT_EQ(server.hits(), 1);
}

TEST(HttpRewriter, UnreachableServerTimesOut) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }  // closed again, nothing listens there now
    auto policy = fast_policy(2);
    policy.timeout = 300ms;
    EXPECT_EQ(failure_of([&] {
                  (void)http_rewrite("http://127.0.0.1:" + std::to_string(port), RewriteRequest::condense("q", "a"),
                                     policy);
              }),
              RewriterFailure::Timeout);
}

TEST(HttpRewriter, RejectsBadConfiguration) {
    EXPECT_THROW(HttpRewriter("ftp://x", fast_policy()), ValidationError);
    EXPECT_THROW(HttpRewriter("http://127.0.0.1:1", fast_policy(6)), ValidationError);
    auto p = fast_policy();
    p.max_in_flight = 0;
    EXPECT_THROW(HttpRewriter("http://127.0.0.1:1", p), ValidationError);
}

TEST(HttpRewriter, BoundsRequestsInFlight) {
    std::atomic<int> active{0}, peak{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        const int now = ++active;
        int expected = peak.load();
        while (now > expected && !peak.compare_exchange_weak(expected, now)) {
        }
        std::this_thread::sleep_for(20ms);
        --active;
        reply(res, R"({"texts":["x"]})");
    });
    auto policy = fast_policy();
    policy.max_in_flight = 2;
    HttpRewriter rw(server.url(), policy);
    std::vector<std::thread> workers;
    for (int i = 0; i < 8; ++i) {
        workers.emplace_back([&] { (void)rw.rewrite(RewriteRequest::incorrect_answer("q", "a")); });
    }
    for (auto& t : workers) t.join();
    EXPECT_EQ(server.hits(), 8);
    EXPECT_LE(peak.load(), 2);
}

TEST(HttpRewriter, DrivesTransformDataset) {
    MockServer server([](const httplib::Request& req, httplib::Response& res) {
        const auto j = nlohmann::json::parse(req.body);
        const auto kind = j["kind"].get<std::string>();
        if (kind == "distractors") reply(res, R"({"texts":["d1","d2","d3"]})");
        else if (kind == "incorrect_answer") reply(res, R"({"texts":["wrong"]})");
        else if (kind == "explain") reply(res, R"({"texts":["because of the visible evidence in the picture"]})");
        else reply(res, "{}", 400);
    });
    qa::Dataset ds("remote");
    for (int i = 0; i < 40; ++i) {
        qa::InstructionSample s;
        s.id = std::to_string(i);
        s.question = "What is shown?";
        s.rfp = std::string(asd::kRfpShort);
        s.gt_label = "tower";
        s.format = qa::QuestionFormat::ShortAnswer;
        ds.add(s);
    }
    HttpRewriter rw(server.url(), fast_policy());
    asd::TransformOptions opts;
    opts.threads = 4;
    const auto out = asd::transform_dataset(ds, 40, rw, 1, {}, opts);
    EXPECT_EQ(out.dataset.size(), 40u);
    EXPECT_EQ(out.log.attempted(), 16u);
    EXPECT_EQ(out.log.failures(), 0u);
    EXPECT_EQ(out.dataset.count(qa::QuestionFormat::MultipleChoice), 4u);
    // "tower. because ..." is 9 words, under both bands. Remote backends are
    // reported out of band, not rejected.
    EXPECT_EQ(out.dataset.count(qa::QuestionFormat::BriefExplanation), 4u);
    EXPECT_EQ(out.log.out_of_band(), 8u);
}
