#include <stdio.h>
#include <string.h>
#include "clea.h"

static int check(int cond, const char *what) {
    if (!cond) {
        const char *e = clea_last_error();
        fprintf(stderr, "FAIL %s (%s)\n", what, e ? e : "no error");
    }
    return cond ? 0 : 1;
}

int main(void) {
    int failures = 0;
    CleaWorld *w = NULL;
    char *s = NULL;

    failures += check(clea_world_new_default(&w) == CLEA_STATUS_OK, "new world");
    failures += check(clea_world_digest(w, &s) == CLEA_STATUS_OK && strlen(s) == 64, "digest");
    char before[65];
    strcpy(before, s);
    clea_string_free(s);

    failures += check(clea_world_step(w, "pick_from(robot1, water, refrigerator)", &s) == CLEA_STATUS_ACTION_FAILED, "failing step");
    failures += check(strstr(s, "not_at_location") != NULL, "feedback kind");
    clea_string_free(s);
    clea_world_digest(w, &s);
    failures += check(strcmp(before, s) == 0, "error keeps digest");
    clea_string_free(s);

    failures += check(clea_world_step(w, "go_to(robot1, table)", NULL) == CLEA_STATUS_OK, "go_to");
    failures += check(clea_world_observe(w, "robot1", &s) == CLEA_STATUS_OK && strstr(s, "apple") != NULL, "observe");
    clea_string_free(s);

    failures += check(clea_parse_action("fly(robot1)", &s) == CLEA_STATUS_PARSE_ERROR, "parse error");
    failures += check(clea_last_error() != NULL, "last error set");
    failures += check(clea_world_step(NULL, "go_to(robot1, table)", NULL) == CLEA_STATUS_NULL_ARGUMENT, "null handle");

    clea_world_free(w);
    if (failures == 0) {
        printf("c smoke ok\n");
    }
    return failures;
}
