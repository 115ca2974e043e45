package testcases.CWE9999_Unknown_Weakness;

public class CWE9999_Unknown_Weakness__basic_01 extends AbstractTestCase
{
    public void bad() throws Throwable
{
        doSomething();
}

    public void good() throws Throwable
{
        doSomethingElse();
}
}
