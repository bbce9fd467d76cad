// Minimal detection provider for bridge tests. Scores with the surrogate and
// can be told to misbehave in specific ways.
#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "vplidar/bridge.hpp"
#include "vplidar/io.hpp"
#include "vplidar/surrogate.hpp"

using nlohmann::json;
using namespace vplidar;

int main(int argc, char** argv) {
    std::string mode;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a.rfind("--", 0) == 0) mode = a.substr(2);
    }
    if (mode == "bad-hello") {
        std::cout << "{\"id\": 1, \"status\": \"error\", \"message\": \"unsupported protocol\"}\n" << std::flush;
        return 0;
    }

    SurrogateDetector det;
    std::string line;
    while (std::getline(std::cin, line)) {
        const json req = json::parse(line);
        const auto id = req.at("id");
        const std::string op = req.value("op", "");
        json resp{{"id", id}, {"status", "ok"}};

        if (op != "hello" && mode == "exit") return 3;
        if (op != "hello" && mode == "hang") {
            std::this_thread::sleep_for(std::chrono::seconds(30));
            continue;
        }
        if (op != "hello" && mode == "bad-json") {
            std::cout << "{not json\n" << std::flush;
            continue;
        }
        if (op != "hello" && mode == "wrong-id") resp["id"] = id.get<std::uint64_t>() + 100;
        if (op != "hello" && mode == "model-error") {
            resp["status"] = "model_error";
            resp["message"] = "CUDA out of memory";
            std::cout << resp.dump() << "\n" << std::flush;
            continue;
        }

        try {
            if (op == "hello") {
                resp["protocol"] = kProtocolVersion;
                resp["threshold"] = det.threshold();
                resp["name"] = "fake";
            } else if (op == "detect") {
                const Scene scene = load_scene_json(req.at("scene").get<std::string>());
                std::vector<BoundingBox> cands;
                for (const auto& c : req.at("candidates")) cands.push_back(box_from_json(c));
                json dets = json::array();
                for (const Prediction& p : det.predict(scene, cands)) {
                    dets.push_back({{"box", json::parse(box_to_json(p.box).dump())},
                                    {"logit", p.logit},
                                    {"probability", p.probability}});
                }
                resp["detections"] = dets;
            } else if (op == "score") {
                const Scene scene = load_scene_json(req.at("scene").get<std::string>());
                const BoundingBox box = box_from_json(req.at("box"));
                const auto targets = req.at("targets").get<std::vector<std::size_t>>();
                ScoreGradient g = det.score_gradient(scene, box, targets);
                if (mode == "short-gradient" && !g.gradient.empty()) g.gradient.pop_back();
                const auto bytes = encode_gradient_payload(g.gradient);
                write_binary_file(req.at("gradient_path").get<std::string>(), bytes);
                resp["logit"] = g.logit;
                resp["empty"] = g.empty;
                resp["count"] = mode == "count-mismatch" ? targets.size() + 1 : targets.size();
            } else {
                resp["status"] = "error";
                resp["message"] = "unknown op '" + op + "'";
            }
        } catch (const std::exception& e) {
            resp = {{"id", id}, {"status", "error"}, {"message", e.what()}};
        }
        std::cout << resp.dump() << "\n" << std::flush;
    }
    return 0;
}
