// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/http_rewriter.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "forgetlab/error.hpp"

namespace forgetlab::rewrite {

namespace {

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    const auto scheme = endpoint.find("://");
    if (scheme == std::string::npos || endpoint.compare(0, scheme, "http") != 0) {
        throw ValidationError("rewriter endpoint must be an http:// URL, got '" + endpoint + "'");
    }
    const auto path_start = endpoint.find('/', scheme + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

void check_policy(const HttpPolicy& policy) {
    if (policy.retries < 0 || policy.retries > 5) throw ValidationError("retries must be in [0, 5]");
    if (policy.timeout.count() <= 0) throw ValidationError("timeout must be positive");
    if (policy.max_in_flight == 0) throw ValidationError("max_in_flight must be positive");
}

}  // namespace

std::string encode_request(const RewriteRequest& request) {
    nlohmann::ordered_json body;
    body["kind"] = kind_tag(request.kind);
    switch (request.kind) {
        case RewriteKind::Distractors: body["count"] = request.count; break;
        case RewriteKind::Condense: body["max_words"] = request.max_words; break;
        case RewriteKind::Explain:
        case RewriteKind::Reformulate: body["target_words"] = request.target_words; break;
        default: break;
    }
    body["question"] = request.question;
    body["gt_label"] = request.gt_label;
    body["image"] = request.image;
    body["context"] = request.context;
    return body.dump();
}

RewriteResponse decode_response(const std::string& body) {
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw RewriterError(RewriterFailure::ContractViolation, std::string("malformed response: ") + e.what());
    }
    if (!parsed.is_object() || parsed.size() != 1 || !parsed.contains("texts") || !parsed["texts"].is_array()) {
        throw RewriterError(RewriterFailure::ContractViolation, "response must be {\"texts\":[...]}");
    }
    RewriteResponse resp;
    for (const auto& t : parsed["texts"]) {
        if (!t.is_string()) throw RewriterError(RewriterFailure::ContractViolation, "texts must be strings");
        resp.texts.push_back(t.get<std::string>());
    }
    return resp;
}

RewriteResponse http_rewrite(const std::string& endpoint, const RewriteRequest& request,
                             const HttpPolicy& policy) {
    check_request(request);
    check_policy(policy);
    const auto target = parse_endpoint(endpoint);
    const auto body = encode_request(request);

    httplib::Client client(target.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(policy.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const int attempts = policy.retries + 1;
    auto backoff = policy.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        auto result = client.Post(target.path, body, "application/json");
        if (!result) {
            last_error = httplib::to_string(result.error());
            continue;
        }
        if (result->status == 200) {
            auto resp = decode_response(result->body);
            check_response(request, resp);
            return resp;
        }
        if (result->status >= 500 || result->status == 429) {
            last_error = "HTTP status " + std::to_string(result->status);
            continue;
        }
        throw RewriterError(RewriterFailure::Unavailable,
                            "rewriter endpoint returned HTTP status " + std::to_string(result->status));
    }
    throw RewriterError(RewriterFailure::Timeout, "rewriter endpoint failed after " + std::to_string(attempts) +
                                                      " attempts: " + last_error);
}

HttpRewriter::HttpRewriter(std::string endpoint, HttpPolicy policy)
    : endpoint_(std::move(endpoint)), policy_(policy) {
    check_policy(policy_);
    parse_endpoint(endpoint_);
    const auto slots = std::min<std::size_t>(policy_.max_in_flight, kMaxInFlight);
    slots_ = std::make_unique<std::counting_semaphore<kMaxInFlight>>(static_cast<std::ptrdiff_t>(slots));
}

RewriteResponse HttpRewriter::rewrite(const RewriteRequest& request) {
    slots_->acquire();
    struct Release {
        std::counting_semaphore<kMaxInFlight>& s;
        ~Release() { s.release(); }
    } release{*slots_};
    return http_rewrite(endpoint_, request, policy_);
}

}  // namespace forgetlab::rewrite
