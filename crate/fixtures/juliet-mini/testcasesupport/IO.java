package testcasesupport;

public class IO
{
    public static void bad() { }
}
