"""
Exit codes
One code per error class so scripts driving the command line can branch on
the failure without parsing stderr.
"""
EXIT_0_SUCCESS = 0
EXIT_1_UNEXPECTED = 1
EXIT_2_USAGE = 2
EXIT_3_SCHEMA_ERROR = 3
EXIT_4_PARSE_ERROR = 4
EXIT_5_CONSISTENCY_ERROR = 5
EXIT_6_DOMAIN_ERROR = 6
EXIT_7_INIT_ERROR = 7
EXIT_8_ADAPTATION_ERROR = 8
EXIT_9_CONVERGENCE_FAILURE = 9
EXIT_10_TRANSFORM_ERROR = 10
EXIT_11_CONFIG_ERROR = 11

_PHRASES = {
    EXIT_0_SUCCESS: "Success",
    EXIT_1_UNEXPECTED: "Unexpected error",
    EXIT_2_USAGE: "Usage error",
    EXIT_3_SCHEMA_ERROR: "Input does not match the expected schema",
    EXIT_4_PARSE_ERROR: "Input value could not be parsed",
    EXIT_5_CONSISTENCY_ERROR: "Input rows are inconsistent",
    EXIT_6_DOMAIN_ERROR: "Argument outside the support of the distribution",
    EXIT_7_INIT_ERROR: "No finite initial point found",
    EXIT_8_ADAPTATION_ERROR: "Sampler adaptation failed",
    EXIT_9_CONVERGENCE_FAILURE: "Convergence checks failed",
    EXIT_10_TRANSFORM_ERROR: "Value violates its parameter constraint",
    EXIT_11_CONFIG_ERROR: "Invalid configuration",
}


def phrase(exit_code: int) -> str:
    return _PHRASES.get(exit_code, _PHRASES[EXIT_1_UNEXPECTED])
