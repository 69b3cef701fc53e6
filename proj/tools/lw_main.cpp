#include <iostream>
#include <string>

int main(int argc, char* argv[]) {
    if (argc < 2) {
        std::cerr << "usage: lw <command> [options]\n";
        return 2;
    }
    std::cerr << "lw: unknown command '" << argv[1] << "'\n";
    return 2;
}
