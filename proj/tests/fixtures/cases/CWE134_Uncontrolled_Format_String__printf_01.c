/*
 * Environment string used directly as a printf format.
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#ifndef OMITBAD

static void badSink(char * data)
{
    printf(data);
    printf("\n");
}

void CWE134_Uncontrolled_Format_String__printf_01_bad()
{
    char data[100];
    data[0] = '\0';
    {
        char * env = getenv("ADD");
        if (env != NULL)
        {
            strncat(data, env, 100 - 1);
        }
    }
    badSink(data);
}

#endif /* OMITBAD */

#ifndef OMITGOOD

static void goodG2BSink(char * data)
{
    printf("%s\n", data);
}

void CWE134_Uncontrolled_Format_String__printf_01_good()
{
    char data[100];
    data[0] = '\0';
    {
        char * env = getenv("ADD");
        if (env != NULL)
        {
            strncat(data, env, 100 - 1);
        }
    }
    goodG2BSink(data);
}

#endif /* OMITGOOD */

#ifdef INCLUDEMAIN

int main(int argc, char * argv[])
{
#ifndef OMITGOOD
    CWE134_Uncontrolled_Format_String__printf_01_good();
#endif /* OMITGOOD */
#ifndef OMITBAD
    CWE134_Uncontrolled_Format_String__printf_01_bad();
#endif /* OMITBAD */
    return 0;
}

#endif /* INCLUDEMAIN */
