#include <layoutforge/app.hpp>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return layoutforge::run_cli(args);
}
