/*
 * Environment-derived string concatenated into a system() command.
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static void goodG2B()
{
    char data[100];
    strcpy(data, "ls ");
    strncat(data, ".", 100 - strlen(data) - 1);
    if (system(data) != 0)
    {
        printf("command failed\n");
    }
}

void CWE78_OS_Command_Injection__system_01_good()
{
    goodG2B();
}

int main(int argc, char * argv[])
{
    CWE78_OS_Command_Injection__system_01_good();
    return 0;
}

