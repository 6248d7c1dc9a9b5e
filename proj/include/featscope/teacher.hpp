#pragma once

// Teacher endpoints for the label/verify loop.
//
// HTTP contract (frozen):
//   POST {base_url}/v1/chat/completions
//   request:  {"model": str, "temperature": 0, "messages": [{"role": "user", "content": prompt}]}
//   response: {"choices": [{"message": {"content": str}}, ...]}  (first choice is used)
//
// Transcript files are JSONL, one {"prompt": str, "response": str} object per line.

#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "featscope/detail/http.hpp"
#include "featscope/error.hpp"

namespace featscope {

class Teacher {
public:
    virtual ~Teacher() = default;
    /// Sends one user message and returns the reply text. Implementations must be thread-safe.
    virtual std::string complete(const std::string& prompt) = 0;
};

struct TeacherEndpoint : HttpEndpoint {
    std::string model = "teacher";
};

class HttpTeacher : public Teacher {
public:
    explicit HttpTeacher(TeacherEndpoint ep) : ep_(std::move(ep)), limiter_((ep_.validate(), ep_.rate_limit_rps)) {}

    std::string complete(const std::string& prompt) override {
        const nlohmann::json body = {{"model", ep_.model},
                                     {"temperature", 0},
                                     {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        const auto reply = detail::post_json(ep_, limiter_, "/v1/chat/completions", body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw EndpointError(std::string("malformed chat completion reply: ") + e.what());
        }
    }

private:
    TeacherEndpoint ep_;
    detail::RateLimiter limiter_;
};

/// Wraps a plain function; used for scripted mocks.
class FunctionTeacher : public Teacher {
public:
    explicit FunctionTeacher(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
    std::string complete(const std::string& prompt) override { return fn_(prompt); }

private:
    std::function<std::string(const std::string&)> fn_;
};

/// Answers from a recorded transcript keyed by exact prompt text.
class ReplayTeacher : public Teacher {
public:
    explicit ReplayTeacher(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open transcript " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                answers_[j.at("prompt").get<std::string>()] = j.at("response").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::string complete(const std::string& prompt) override {
        const auto it = answers_.find(prompt);
        if (it == answers_.end()) throw EndpointError("prompt not present in transcript");
        return it->second;
    }

    std::size_t size() const { return answers_.size(); }

private:
    std::unordered_map<std::string, std::string> answers_;
};

/// Forwards to another teacher and appends every exchange to a transcript file.
class RecordingTeacher : public Teacher {
public:
    RecordingTeacher(std::shared_ptr<Teacher> inner, const std::string& path) : inner_(std::move(inner)), out_(path) {
        if (!out_) throw IoError("cannot write transcript " + path);
    }

    std::string complete(const std::string& prompt) override {
        auto response = inner_->complete(prompt);
        std::lock_guard<std::mutex> lock(mu_);
        out_ << nlohmann::json{{"prompt", prompt}, {"response", response}}.dump() << '\n';
        out_.flush();
        return response;
    }

private:
    std::shared_ptr<Teacher> inner_;
    std::ofstream out_;
    std::mutex mu_;
};

}  // namespace featscope
