#include "rasgd/cli.hpp"

int main(int argc, char** argv) { return rasgd::run_cli(argc, argv); }
