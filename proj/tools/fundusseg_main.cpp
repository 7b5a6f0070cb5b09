#include "fundus/cli.hpp"

int main(int argc, char** argv) { return fundus::cli::run(argc, argv); }
