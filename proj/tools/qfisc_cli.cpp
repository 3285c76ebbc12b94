#include "qfisc/cli.hpp"

int main(int argc, char** argv) { return qfisc::cli_main(argc, argv); }
