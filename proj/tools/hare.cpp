#include "hare/cli.hpp"

int main(int argc, char** argv) { return hare::run_cli(argc, argv); }
