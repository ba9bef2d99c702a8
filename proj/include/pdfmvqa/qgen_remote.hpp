// HTTP client for a chat-completions-style generation endpoint. Split from
// qgen.hpp so only binaries that actually talk to a service pull in httplib.
#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pdfmvqa/qgen.hpp"

namespace pdfmvqa::qgen {

class RemoteGenerator : public GeneratorClient {
  public:
    explicit RemoteGenerator(RemoteConfig config) : config_(std::move(config)) {}

    std::vector<std::string> generate(const std::string& prompt, int max_items) override {
        if (max_items <= 0) return {};
        nlohmann::json body = {
            {"model", config_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        };
        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            httplib::Client cli(config_.base_url);
            cli.set_connection_timeout(config_.timeout_sec);
            cli.set_read_timeout(config_.timeout_sec);
            auto res = cli.Post(config_.path, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "connection failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            try {
                nlohmann::json j = nlohmann::json::parse(res->body);
                std::string content =
                    j.at("choices").at(0).at("message").at("content").get<std::string>();
                return split_items(content, max_items);
            } catch (const nlohmann::json::exception& ex) {
                last_error = std::string("bad response: ") + ex.what();
            }
        }
        throw GeneratorError("remote generation failed after " +
                             std::to_string(config_.max_retries + 1) + " attempts (" +
                             last_error + ")");
    }

    std::string name() const override { return "remote:" + config_.model; }

  private:
    // One candidate per non-empty line, numbered-list markers stripped.
    static std::vector<std::string> split_items(const std::string& content, int max_items) {
        std::vector<std::string> out;
        std::string line;
        std::istringstream ss(content);
        while (std::getline(ss, line) && static_cast<int>(out.size()) < max_items) {
            std::size_t start = 0;
            while (start < line.size() &&
                   (std::isdigit(static_cast<unsigned char>(line[start])) ||
                    line[start] == '.' || line[start] == ')' || line[start] == '-' ||
                    line[start] == ' ')) {
                ++start;
            }
            std::string item = line.substr(start);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    RemoteConfig config_;
};

}  // namespace pdfmvqa::qgen
