#include "tae/cli.hpp"

int main(int argc, char** argv) { return tae::run_cli(argc, argv); }
