#include <stdio.h>
#include <string.h>
#include "ltn.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s\n", #cond); return 1; } } while (0)

int main(void) {
    LtnFormula *f = NULL;
    CHECK(ltn_formula_parse("forall x: A(x) -> exists y: R(x, y)", &f) == LTN_STATUS_OK);
    char *text = NULL;
    CHECK(ltn_formula_format(f, &text) == LTN_STATUS_OK);
    CHECK(strcmp(text, "forall x: A(x) -> (exists y: R(x, y))") == 0);
    ltn_string_free(text);
    ltn_formula_free(f);

    CHECK(ltn_formula_parse("forall : A(x)", &f) == LTN_STATUS_PARSE_ERROR);
    CHECK(f == NULL);
    CHECK(strstr(ltn_last_error(), "column 8") != NULL);

    double v[2] = {0.8, 0.6};
    double out = 0.0;
    CHECK(ltn_aggregate(LTN_QUANTIFIER_FORALL, v, 2, 2.0, &out) == LTN_STATUS_OK);
    CHECK(out > 0.6837 && out < 0.6838);
    printf("ok %s\n", ltn_version());
    return 0;
}
