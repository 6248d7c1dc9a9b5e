#pragma once

// Small JSON-over-HTTP client shared by the teacher and embedder endpoints.

#include <chrono>
#include <cmath>
#include <mutex>
#include <string>
#include <thread>

// Eigen has to come first: <resolv.h>, pulled in by httplib, defines _res as a macro.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "featscope/error.hpp"

namespace featscope {

/// Raised when an HTTP endpoint cannot produce a usable reply within its retry budget.
class EndpointError : public Error {
public:
    using Error::Error;
};

struct HttpEndpoint {
    std::string base_url;  // scheme://host[:port][/prefix]
    double timeout_s = 60.0;
    int retry_budget = 3;
    double rate_limit_rps = 4.0;
    double backoff_initial_s = 0.5;

    void validate() const {
        if (base_url.empty()) throw ValidationError("endpoint base_url is empty");
        if (retry_budget < 0) throw ValidationError("retry budget must be >= 0");
        if (!(rate_limit_rps > 0.0)) throw ValidationError("rate limit must be > 0");
        if (!(timeout_s > 0.0)) throw ValidationError("timeout must be > 0");
        if (!(backoff_initial_s >= 0.0)) throw ValidationError("backoff must be >= 0");
    }
};

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash, may be empty
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ValidationError("endpoint url lacks a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    SplitUrl out;
    out.origin = url.substr(0, slash);
    if (slash != std::string::npos) out.prefix = url.substr(slash);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

/// Spaces request start times at least 1/rps apart across threads.
class RateLimiter {
public:
    explicit RateLimiter(double rps) : interval_(std::chrono::duration<double>(1.0 / rps)) {}

    void acquire() {
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard<std::mutex> lock(mu_);
            const auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::chrono::duration<double> interval_;
    std::chrono::steady_clock::time_point next_{};
    std::mutex mu_;
};

/// POSTs `body` to base_url + path and returns the parsed JSON reply. Transport errors,
/// non-2xx statuses and unparseable bodies are retried with exponential backoff.
inline nlohmann::json post_json(const HttpEndpoint& ep, RateLimiter& limiter, const std::string& path,
                                const nlohmann::json& body) {
    const auto url = split_url(ep.base_url);
    const std::string payload = body.dump();
    const auto secs = static_cast<time_t>(ep.timeout_s);
    const auto usecs = static_cast<time_t>((ep.timeout_s - static_cast<double>(secs)) * 1e6);
    std::string last_error;
    for (int attempt = 0; attempt <= ep.retry_budget; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::duration<double>(ep.backoff_initial_s * std::pow(2.0, attempt - 1)));
        limiter.acquire();
        httplib::Client client(url.origin);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        auto res = client.Post(url.prefix + path, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("bad JSON reply: ") + e.what();
        }
    }
    throw EndpointError(ep.base_url + path + " failed after " + std::to_string(ep.retry_budget + 1) +
                        " attempts: " + last_error);
}

}  // namespace detail
}  // namespace featscope
