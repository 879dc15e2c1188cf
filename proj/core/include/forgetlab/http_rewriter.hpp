// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>

#include "forgetlab/rewriter.hpp"

namespace forgetlab::rewrite {

inline constexpr const char* kRewriterUrlEnv = "FORGETLAB_REWRITER_URL";

struct HttpPolicy {
    std::chrono::milliseconds timeout{10000};
    int retries = 2;  // extra attempts after the first; at most 5
    std::chrono::milliseconds initial_backoff{50};
    std::size_t max_in_flight = 8;
};

/// JSON body sent for a request: the request fields with a `kind`
/// discriminator and only the size parameter that kind uses.
[[nodiscard]] std::string encode_request(const RewriteRequest& request);
/// Parses `{"texts":[...]}`; throws RewriterError(ContractViolation) on any
/// other shape.
[[nodiscard]] RewriteResponse decode_response(const std::string& body);

/// One POST to `endpoint` (http://host[:port][/path]) with retries and
/// exponential backoff on transport errors and 5xx/429 statuses. Throws
/// RewriterError: Timeout once attempts are exhausted, ContractViolation on a
/// malformed body, Unavailable on other non-200 statuses.
[[nodiscard]] RewriteResponse http_rewrite(const std::string& endpoint, const RewriteRequest& request,
                                           const HttpPolicy& policy);

class HttpRewriter final : public Rewriter {
public:
    HttpRewriter(std::string endpoint, HttpPolicy policy);

    [[nodiscard]] RewriteResponse rewrite(const RewriteRequest& request) override;
    [[nodiscard]] std::string_view name() const noexcept override { return "http"; }

private:
    static constexpr std::ptrdiff_t kMaxInFlight = 1024;

    std::string endpoint_;
    HttpPolicy policy_;
    std::unique_ptr<std::counting_semaphore<kMaxInFlight>> slots_;
};

}  // namespace forgetlab::rewrite
